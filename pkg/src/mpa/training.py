"""Training loop, plateau learning-rate schedule and per-type model selection."""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .augment import mask_history
from .checkpoint import save_checkpoint
from .config import doc
from .features import collate
from .inference import eval_records, predict_scenes
from .metrics import report
from .objective import mixture_nll
from .postprocess import PostprocessConfig
from .predictor import ModelConfig, MotionPredictor, sample_update_mask
from .scene import AgentType, Scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization, scheduling and data settings for ``mpa train``."""

    data: str = doc("scene cache used for training", "")
    val_data: str = doc("optional separate validation cache; empty = hash split of `data`", "")
    output: str = doc("checkpoint path for the best-validation parameters", "model.ckpt")
    seed: int = doc("seed for initialization, batching, masking and decoder blocking", 0)
    steps: int = doc("optimizer steps (full-scale training runs use on the order of 1.5e6)", 2000)
    batch_size: int = doc("scenes per step; per-scene losses are averaged", 16)
    lr: float = doc("initial learning rate", 1e-4)
    beta1: float = doc("Adam first-moment decay", 0.9)
    beta2: float = doc("Adam second-moment decay", 0.999)
    plateau_factor: float = doc("LR multiplier on a plateau", 0.5)
    plateau_patience: int = doc("evaluations without improvement that are tolerated; the next one drops the LR", 5)
    plateau_delta: float = doc("minimum validation NLL decrease that counts as improvement", 1e-3)
    eval_every: int = doc("steps between validation passes", 100)
    p_mask: float = doc("history masking probability per (agent, timestep)", 0.15)
    grad_clip: float = doc("gradient norm clip, <= 0 disables", 10.0)
    p_update: float = doc("multi head: probability that a decoder is updated on a step", 0.5)
    val_fraction: float = doc("share of scenes held out by scene-id hash; 0 = validate on training data", 0.1)
    threads: int = doc("torch intra-op threads; 1 gives bit-reproducible runs", 1)

    def validate(self) -> None:
        if self.steps <= 0 or self.batch_size <= 0 or self.eval_every <= 0:
            raise ValueError("steps, batch_size and eval_every must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must be in (0, 1)")


def plateau_scheduler(optimizer: torch.optim.Optimizer, factor: float = 0.5, patience: int = 5, delta: float = 1e-3):
    """LR times ``factor`` once ``patience`` evaluations in a row miss a ``delta`` improvement and one more does too."""
    return torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, mode="min", factor=factor, patience=patience, threshold=delta, threshold_mode="abs"
    )


def split_by_hash(scenes: Sequence[Scene], val_fraction: float) -> Tuple[List[Scene], List[Scene]]:
    """Stable train/validation split keyed on the scene id."""
    cut = int(round(val_fraction * 1000))
    train, val = [], []
    for s in scenes:
        (val if zlib.crc32(s.scene_id.encode("utf-8")) % 1000 < cut else train).append(s)
    return train, val


@torch.no_grad()
def evaluate_nll(model: MotionPredictor, scenes: Sequence[Scene], batch_size: int = 64) -> float:
    model.eval()
    cfg = model.config
    dtype = next(model.parameters()).dtype
    total = 0.0
    for start in range(0, len(scenes), batch_size):
        chunk = scenes[start : start + batch_size]
        batch = collate(chunk, cfg.history_steps, cfg.max_neighbors, cfg.max_polylines, cfg.max_nodes, dtype=dtype)
        out = model(batch)
        total += float(mixture_nll(out.trajectories, out.cov_raw, out.logits, batch.gt, batch.gt_valid, reduction="none").double().sum())
    return total / len(scenes)


@dataclass
class TrainResult:
    model: MotionPredictor
    history: List[Dict[str, float]] = field(default_factory=list)
    best_val_nll: float = math.inf
    best_step: int = 0
    initial_val_nll: float = math.inf


def _batches(n: int, batch_size: int, seed: int):
    """Yield ``(epoch, indices)`` forever from per-epoch seeded permutations."""
    epoch = 0
    size = min(batch_size, n)
    while True:
        order = np.random.default_rng([seed, 1, epoch]).permutation(n)
        for start in range(0, n - size + 1, size):
            yield epoch, order[start : start + size]
        epoch += 1


def train_loop(
    train_cfg: TrainConfig,
    model_cfg: ModelConfig,
    scenes: Sequence[Scene],
    val_scenes: Optional[Sequence[Scene]] = None,
    save: bool = True,
) -> TrainResult:
    """Fit a MotionPredictor with Adam and a plateau LR schedule.

    The returned model holds the best-validation parameters, which are also
    written to ``train_cfg.output`` when ``save`` is true.
    """
    train_cfg.validate()
    torch.set_num_threads(train_cfg.threads)
    torch.manual_seed(train_cfg.seed)

    scenes = list(scenes)
    if val_scenes is None:
        if train_cfg.val_fraction > 0:
            scenes, val_scenes = split_by_hash(scenes, train_cfg.val_fraction)
            if not val_scenes:
                log.warning("hash split left no validation scenes; validating on training data")
                val_scenes = scenes
        else:
            val_scenes = scenes
    if not scenes:
        raise ValueError("no training scenes")

    model = MotionPredictor(model_cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.lr, betas=(train_cfg.beta1, train_cfg.beta2), foreach=False)
    scheduler = plateau_scheduler(optimizer, train_cfg.plateau_factor, train_cfg.plateau_patience, train_cfg.plateau_delta)
    block_rng = np.random.default_rng([train_cfg.seed, 2])

    result = TrainResult(model=model)
    result.initial_val_nll = result.best_val_nll = evaluate_nll(model, val_scenes)
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    log.info("step 0: val nll %.4f", result.initial_val_nll)

    batches = _batches(len(scenes), train_cfg.batch_size, train_cfg.seed)
    for step in range(1, train_cfg.steps + 1):
        model.train()
        epoch, idx = next(batches)
        chunk = [mask_history(scenes[i], train_cfg.p_mask, train_cfg.seed, epoch) for i in idx]
        batch = collate(chunk, model_cfg.history_steps, model_cfg.max_neighbors, model_cfg.max_polylines, model_cfg.max_nodes)
        out = model(batch)
        loss = mixture_nll(out.trajectories, out.cov_raw, out.logits, batch.gt, batch.gt_valid)
        if not torch.isfinite(loss):
            ids = [scenes[i].scene_id for i in idx]
            log.error("non-finite loss at step %d, batch %s", step, ids)
            raise FloatingPointError(f"non-finite loss at step {step} (batch {ids})")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        if model_cfg.head == "multi":
            flags = sample_update_mask(model_cfg.num_decoders, block_rng, train_cfg.p_update)
            for k in np.flatnonzero(~flags):
                for p in model.decoder_parameters(k):
                    p.grad = None  # Adam skips parameters without a gradient
        if train_cfg.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip)
        optimizer.step()

        if step % train_cfg.eval_every == 0 or step == train_cfg.steps:
            val = evaluate_nll(model, val_scenes)
            scheduler.step(val)
            lr = optimizer.param_groups[0]["lr"]
            result.history.append({"step": step, "train_nll": loss.item(), "val_nll": val, "lr": lr})
            log.info("step %d: train nll %.4f  val nll %.4f  lr %.2e", step, loss.item(), val, lr)
            if val < result.best_val_nll:
                result.best_val_nll, result.best_step = val, step
                best_state = {k: v.clone() for k, v in model.state_dict().items()}

    model.load_state_dict(best_state)
    model.eval()
    if save and train_cfg.output:
        save_checkpoint(model, train_cfg.output, meta={
            "best_step": result.best_step,
            "best_val_nll": result.best_val_nll,
            "initial_val_nll": result.initial_val_nll,
            "seed": train_cfg.seed,
        })
    return result


def select_per_type(
    candidates: Sequence[Tuple[str, MotionPredictor]],
    val_scenes: Sequence[Scene],
    post: Optional[PostprocessConfig] = None,
) -> Dict[AgentType, str]:
    """For each agent type pick the candidate with the best validation Soft mAP.

    Ties go to the earlier candidate. A type without validation scenes falls
    back to the candidate with the best overall Soft mAP.
    """
    if not candidates:
        raise ValueError("need at least one candidate checkpoint")
    scores: List[Dict[str, float]] = []
    for _, model in candidates:
        rep = report(eval_records(predict_scenes(model, val_scenes, post), val_scenes))
        row_scores = {name: row["soft_map"] for name, row in rep.rows.items()}
        scores.append(row_scores)
    overall = max(range(len(candidates)), key=lambda i: (scores[i].get("Total", -1.0), -i))
    table = {}
    for agent in AgentType:
        row = f"Avg {agent.label.capitalize()}"
        if row not in scores[0]:
            log.warning("no validation scenes for %s; using overall best %s", agent.label, candidates[overall][0])
            table[agent] = candidates[overall][0]
            continue
        best = max(range(len(candidates)), key=lambda i: (scores[i][row], -i))
        table[agent] = candidates[best][0]
    return table
