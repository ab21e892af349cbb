"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from .graph import PUBLISHED_HOLD_RATIO

ALL_METHODS = ("umhi", "line1", "line2", "line1+line2", "han", "mf", "line1+line2+han",
               "deepwalk", "node2vec", "da_lr", "sa_lr")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Every pipeline knob; defaults follow the published settings where they exist."""

    relations: str = ""
    posts: str = ""
    out: str = "umhi-run"
    window_start: int = 0
    window_end: int = 0
    seed: int = 0
    workers: int = 1

    line_dim: int = 100
    line_epochs: int = 100
    line_negatives: int = 5
    line_lr: float = 0.025

    walk_dim: int = 100
    walks_per_node: int = 10
    walk_length: int = 40
    walk_window: int = 5
    walk_epochs: int = 1
    node2vec_p: float = 0.5
    node2vec_q: float = 2.0
    node2vec_grid: str = ""

    word_dim: int = 100
    word_window: int = 5
    word_epochs: int = 5
    word_negatives: int = 5
    han_hidden: int = 100
    han_attention: int = 100
    han_epochs: int = 10
    han_lr: float = 0.001
    han_batch: int = 64
    han_max_tokens: int = 100
    han_max_posts: int = 50
    han_float32: bool = False

    mf_k: int = 64
    mf_lr: float = 0.01
    mf_lambda: float = 0.01
    mf_epochs: int = 100

    fusion_hidden: str = "256,64"
    fusion_epochs: int = 10
    fusion_lr: float = 0.001
    fusion_batch: int = 64
    adam_beta1: float = 0.1
    adam_beta2: float = 0.001
    val_fraction: float = 0.1

    folds: int = 5
    hold_ratio: float = PUBLISHED_HOLD_RATIO
    max_unfollow: int = 0
    methods: str = ",".join(ALL_METHODS)
    svd_dim: int = 50
    lr_l2: float = 1.0
    threshold: float = 0.5

    damping: float = 0.85
    role_fraction: float = 0.05
    rou_bins: int = 10
    rou_min_count: int = 20

    @property
    def window(self) -> tuple[int, int]:
        return (self.window_start, self.window_end)

    @property
    def betas(self) -> tuple[float, float]:
        return (self.adam_beta1, self.adam_beta2)

    @property
    def hidden_layers(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.fusion_hidden.split(",") if x.strip())

    @property
    def node2vec_grid_points(self) -> tuple[tuple[float, float], ...]:
        """``"p:q,p:q"`` as pairs; empty means the fixed ``node2vec_p``/``node2vec_q``."""
        points = []
        for item in self.node2vec_grid.split(","):
            if not item.strip():
                continue
            try:
                p, q = (float(x) for x in item.split(":"))
            except ValueError:
                raise ConfigError(f"node2vec_grid: expected 'p:q' items, got {item!r}") from None
            if p <= 0 or q <= 0:
                raise ConfigError(f"node2vec_grid: p and q must be positive, got {item!r}")
            points.append((p, q))
        return tuple(points)

    @property
    def method_list(self) -> tuple[str, ...]:
        out = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        bad = [m for m in out if m not in ALL_METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; known: {', '.join(ALL_METHODS)}")
        return out

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **coerce(kw))

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_fmt(getattr(self, f.name))}\n" for f in fields(self))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_TYPES = {f.name: type(f.default) for f in fields(ExperimentConfig)}


def _parse(key: str, raw) -> object:
    kind = _TYPES[key]
    if not isinstance(raw, str):
        raw_val = raw
        if kind is float and isinstance(raw_val, int) and not isinstance(raw_val, bool):
            return float(raw_val)
        if not isinstance(raw_val, kind):
            raise ConfigError(f"{key}: expected {kind.__name__}, got {raw_val!r}")
        return raw_val
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def coerce(values: dict) -> dict:
    unknown = sorted(set(values) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return {k: _parse(k, v) for k, v in values.items()}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return coerce(values)


def load_config(path=None, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)) if path else {}
    values.update(coerce(overrides))
    return ExperimentConfig(**values)


DESK_PROFILE = {
    "word_dim": 32, "han_hidden": 32, "han_attention": 32, "han_float32": True,
    "han_max_tokens": 30, "han_max_posts": 20,
}
