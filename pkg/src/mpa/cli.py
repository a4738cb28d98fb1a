"""Command line entry point: ``mpa <command> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Union

from . import cache, inference
from .checkpoint import is_checkpoint, load_checkpoint
from .config import ConfigError, load_config, reference_markdown
from .metrics import report
from .postprocess import PostprocessConfig
from .predictor import ModelConfig, MotionPredictor
from .scene import AgentType, to_canonical_frame
from .synth import GeneratorConfig, generate_scenes
from .training import TrainConfig, select_per_type, train_loop

log = logging.getLogger("mpa")


class CLIError(Exception):
    pass


def _models(path: str) -> Union[MotionPredictor, Dict[AgentType, MotionPredictor]]:
    """A single checkpoint, or a per-type selection table written by ``mpa select``."""
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"checkpoint not found: {path}")
    if is_checkpoint(p):
        return load_checkpoint(p)[0]
    try:
        table = json.loads(p.read_text())
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CLIError(f"{path} is neither a checkpoint nor a selection table") from None
    loaded: Dict[str, MotionPredictor] = {}
    out = {}
    for agent in AgentType:
        ckpt = table[agent.label]
        if not Path(ckpt).is_absolute():
            ckpt = str(p.parent / ckpt)
        if ckpt not in loaded:
            loaded[ckpt] = load_checkpoint(ckpt)[0]
        out[agent] = loaded[ckpt]
    return out


def _post(args) -> PostprocessConfig:
    post = load_config(args.config, PostprocessConfig) if args.config else PostprocessConfig()
    if args.no_nms:
        post = dataclasses.replace(post, nms=False)
    return post


def _read_scenes(path: str):
    if not Path(path).is_file():
        raise CLIError(f"data file not found: {path}")
    return cache.cache_read(path)


def cmd_generate(args) -> None:
    params = load_config(args.config, GeneratorConfig) if args.config else GeneratorConfig()
    scenes = [to_canonical_frame(s) for s in generate_scenes(args.seed, args.count, params)]
    cache.cache_write(scenes, args.out)
    print(f"wrote {len(scenes)} scenes to {args.out}")


def cmd_train(args) -> None:
    train_cfg, model_cfg = load_config(args.config, TrainConfig, ModelConfig)
    if not train_cfg.data:
        raise CLIError("config must set `data`")
    scenes = _read_scenes(train_cfg.data)
    val = _read_scenes(train_cfg.val_data) if train_cfg.val_data else None
    result = train_loop(train_cfg, model_cfg, scenes, val)
    print(f"best validation NLL {result.best_val_nll:.4f} at step {result.best_step} "
          f"(initial {result.initial_val_nll:.4f}); checkpoint {train_cfg.output}")


def cmd_eval(args) -> None:
    scenes = _read_scenes(args.data)
    if args.predictions:
        preds = inference.read_predictions(args.predictions)
    else:
        preds = inference.predict_scenes(_models(args.checkpoint), scenes, _post(args))
    rep = report(inference.eval_records(preds, scenes))
    text = rep.to_text()
    sys.stdout.write(text)
    if args.report:
        Path(args.report + ".txt").write_text(text)
        Path(args.report + ".kv").write_text(rep.to_kv())


def cmd_predict(args) -> None:
    scenes = _read_scenes(args.data)
    preds = inference.predict_scenes(_models(args.checkpoint), scenes, _post(args))
    inference.write_predictions(preds, args.out)
    print(f"wrote {len(preds)} predictions to {args.out}")


def cmd_plot(args) -> None:
    from .plotting import plot_predictions

    preds = inference.read_predictions(args.predictions)
    scenes = _read_scenes(args.data) if args.data else None
    written = plot_predictions(preds, args.out, scenes, args.limit)
    print(f"wrote {len(written)} figures to {args.out}")


def cmd_select(args) -> None:
    scenes = _read_scenes(args.data)
    candidates = [(path, _models(path)) for path in args.checkpoint]
    for path, model in candidates:
        if not isinstance(model, MotionPredictor):
            raise CLIError(f"{path}: select takes plain checkpoints, not tables")
    table = select_per_type(candidates, scenes, _post(args))
    payload = {agent.label: str(Path(path).resolve()) for agent, path in table.items()}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for agent, path in table.items():
        print(f"{agent.label:<11} -> {path}")


def cmd_config_reference(args) -> None:
    text = reference_markdown()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpa", description="Multimodal motion prediction on synthetic scenes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a canonicalized synthetic scene cache")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="generator key-value config")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    def add_post(p):
        p.add_argument("--config", help="postprocessing key-value config")
        p.add_argument("--no-nms", action="store_true", help="disable non-maximum suppression")

    p = sub.add_parser("eval", help="evaluate a checkpoint or a prediction file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="checkpoint or per-type selection table")
    src.add_argument("--predictions", help="prediction file written by `predict`")
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="also write REPORT.txt and REPORT.kv")
    add_post(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write world-frame predictions")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    add_post(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("plot", help="draw predictions as PNG files")
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data", help="scene cache for map and history context")
    p.add_argument("--limit", type=int)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("select", help="pick the best checkpoint per agent type")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--data", required=True, help="validation scene cache")
    p.add_argument("--out", required=True, help="selection table (JSON)")
    add_post(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("config-reference", help="print the configuration reference")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config_reference)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (CLIError, ConfigError, cache.CacheFormatError, inference.PredictionFormatError,
            ValueError, KeyError, FloatingPointError, OSError) as exc:
        print(f"mpa {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
