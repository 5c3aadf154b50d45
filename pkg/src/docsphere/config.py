"""Run configuration: a flat key = value file, overridable per key.

One RunConfig drives the whole pipeline. All stage seeds derive from the
single root seed, so one integer pins every random choice end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from ._util import derive_seed
from .classifier import TrainConfig
from .corpus import MetadataSchema
from .embedding import EmbedConfig
from .generator import GenConfig


def _as_tuple(v):
    if isinstance(v, (tuple, list)):
        return tuple(v)
    v = v.strip()
    return tuple(s.strip() for s in v.split(",") if s.strip()) if v else ()


def _as_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


_COERCE = {
    "corpus": str,
    "out_dir": str,
    "global_fields": _as_tuple,
    "local_fields": _as_tuple,
    "min_count": int,
    "k_per_class": int,
    "seed": int,
    "dim": int,
    "window": int,
    "negatives": int,
    "embed_lr": float,
    "embed_lr_floor": float,
    "embed_epochs": int,
    "embed_batch": int,
    "exclude": _as_tuple,
    "center_every": int,
    "label_refit": _as_bool,
    "workers": int,
    "kappa": float,
    "tau": int,
    "samples_per_class": int,
    "cls_lr": float,
    "cls_epochs": int,
    "cls_batch": int,
    "repeats": int,
}


@dataclass
class RunConfig:
    corpus: str = ""
    out_dir: str = "out"
    global_fields: tuple = ()
    local_fields: tuple = ()
    min_count: int = 2
    k_per_class: int = 10
    seed: int = 0
    dim: int = 100
    window: int = 5
    negatives: int = 5
    embed_lr: float = 0.025
    embed_lr_floor: float = 1e-4
    embed_epochs: int = 10
    embed_batch: int = 512
    exclude: tuple = ()
    center_every: int = 10
    label_refit: bool = True
    workers: int = 1
    kappa: float = 50.0
    tau: int = 50
    samples_per_class: int = 100
    # End-to-end classifier operating point, tuned on the bundled planted
    # benchmark; TrainConfig keeps the library-level defaults.
    cls_lr: float = 0.4
    cls_epochs: int = 40
    cls_batch: int = 96
    repeats: int = 1

    def schema(self) -> MetadataSchema:
        return MetadataSchema(global_fields=self.global_fields,
                              local_fields=self.local_fields)

    # Stage seeds: distinct deterministic children of the root seed.
    def split_seed(self) -> int:
        return derive_seed(self.seed, 10)

    def embed_config(self) -> EmbedConfig:
        return EmbedConfig(dim=self.dim, window=self.window, negatives=self.negatives,
                           learning_rate=self.embed_lr,
                           learning_rate_floor=self.embed_lr_floor,
                           epochs=self.embed_epochs, batch=self.embed_batch,
                           seed=derive_seed(self.seed, 11),
                           exclude=self.exclude, center_every=self.center_every,
                           label_refit=self.label_refit, workers=self.workers)

    def gen_config(self, length_model=None) -> GenConfig:
        return GenConfig(samples_per_class=self.samples_per_class, kappa=self.kappa,
                         tau=self.tau, length_model=length_model,
                         seed=derive_seed(self.seed, 12))

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.cls_batch, learning_rate=self.cls_lr,
                           epochs=self.cls_epochs, seed=derive_seed(self.seed, 13))

    def as_mapping(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = ",".join(v) if isinstance(v, tuple) else v
        return out


def parse_config_file(path) -> dict:
    """Flat text config: one "key = value" per line; blank lines and lines
    starting with # are ignored. Returns raw string values."""
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key in mapping:
                raise ValueError(f"{path}:{line_no}: duplicate key {key!r}")
            mapping[key] = value.strip()
    return mapping


def build_run_config(mapping: dict) -> RunConfig:
    """RunConfig from raw string (or already-typed) values; unknown keys are
    an error so typos never pass silently."""
    kwargs = {}
    for key, value in mapping.items():
        if key not in _COERCE:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = _COERCE[key](value)
    return RunConfig(**kwargs)
