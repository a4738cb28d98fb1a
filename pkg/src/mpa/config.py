"""Plain-text ``key = value`` configuration files.

Every tunable lives on one of the dataclasses registered in ``CONFIG_SECTIONS``.
A file may set keys from several sections at once; keys are routed to the
section that declares them. Unknown keys are an error, never ignored.

Environment variables prefixed with ``MPA_`` override file values, e.g.
``MPA_LR=3e-4`` overrides ``lr``.
"""
from __future__ import annotations

import dataclasses
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Tuple, Type

ENV_PREFIX = "MPA_"


class ConfigError(ValueError):
    pass


def doc(text: str, default: Any) -> Any:
    """Dataclass field with a documentation string attached."""
    return dataclasses.field(default=default, metadata={"doc": text})


def parse_kv_text(text: str, source: str = "<string>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _coerce(raw: str, typ: Any, key: str) -> Any:
    typ = typ if isinstance(typ, str) else getattr(typ, "__name__", str(typ))
    try:
        if typ == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "str":
            return raw
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {typ}") from None
    raise ConfigError(f"key {key!r}: unsupported field type {typ}")


def _env_overrides(known: Iterable[str], environ: Mapping[str, str]) -> Dict[str, str]:
    known = set(known)
    out = {}
    for name, value in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        if key in known:
            out[key] = value
    return out


def build_configs(
    values: Mapping[str, str],
    sections: Tuple[Type[Any], ...],
    environ: Optional[Mapping[str, str]] = None,
) -> Tuple[Any, ...]:
    """Route raw string values into instances of ``sections``.

    Raises ConfigError for keys that no section declares.
    """
    owners: Dict[str, Type[Any]] = {}
    for cls in sections:
        for f in dataclasses.fields(cls):
            owners[f.name] = cls
    merged = dict(values)
    if environ is not None:
        merged.update(_env_overrides(owners, environ))
    unknown = sorted(set(merged) - set(owners))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    kwargs: Dict[Type[Any], Dict[str, Any]] = {cls: {} for cls in sections}
    for key, raw in merged.items():
        cls = owners[key]
        ftype = {f.name: f.type for f in dataclasses.fields(cls)}[key]
        kwargs[cls][key] = _coerce(raw, ftype, key)
    return tuple(cls(**kwargs[cls]) for cls in sections)


def load_config(path: str | os.PathLike, *sections: Type[Any], use_env: bool = True):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = parse_kv_text(path.read_text(), source=str(path))
    configs = build_configs(values, sections, os.environ if use_env else None)
    return configs if len(configs) > 1 else configs[0]


def dump_config(*configs: Any) -> str:
    lines = []
    for cfg in configs:
        for f in dataclasses.fields(cfg):
            value = getattr(cfg, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def reference_markdown(sections: Optional[Tuple[Type[Any], ...]] = None) -> str:
    """Render every config section as a markdown reference page."""
    if sections is None:
        sections = _sections()
    out = [
        "# Configuration reference",
        "",
        "Generated by `mpa.config.reference_markdown()`; do not edit by hand.",
        "",
        "Config files are plain text, one `key = value` per line, `#` starts a comment.",
        f"Any key can be overridden with an environment variable `{ENV_PREFIX}<KEY>` (upper case).",
        "Unknown keys are rejected.",
        "",
    ]
    for cls in sections:
        out.append(f"## {cls.__name__}")
        out.append("")
        if cls.__doc__:
            out.append(cls.__doc__.strip().splitlines()[0])
            out.append("")
        out.append("| key | type | default | description |")
        out.append("|---|---|---|---|")
        for f in dataclasses.fields(cls):
            typ = f.type if isinstance(f.type, str) else f.type.__name__
            default = f.default
            if isinstance(default, bool):
                default = "true" if default else "false"
            text = f.metadata.get("doc", "")
            out.append(f"| `{f.name}` | {typ} | `{default}` | {text} |")
        out.append("")
    return "\n".join(out)


def _sections():
    from .postprocess import PostprocessConfig
    from .predictor import ModelConfig
    from .synth import GeneratorConfig
    from .training import TrainConfig

    return (GeneratorConfig, ModelConfig, TrainConfig, PostprocessConfig)


def __getattr__(name: str):
    if name == "CONFIG_SECTIONS":
        return _sections()
    raise AttributeError(name)
