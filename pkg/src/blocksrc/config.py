"""Experiment configuration: a plain-text key = value file plus overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .dictlearn import MODES, TrainParams
from .synth import SynthSpec

DECISIONS = ("bbmap", "bbll")


@dataclass(frozen=True)
class ExperimentConfig:
    roi_size: int = 64
    block_sizes: tuple[int, ...] = (16,)
    k_folds: int = 10
    dl_mode: str = "none"
    decision: str = "bbll"
    dict_size: int = 0  # K; 0 means one atom per training sample
    sparsity: int = 16  # T
    alpha: float = 1.0
    beta: float = 1.0
    iterations: int = 30
    eps_rel: float = 0.05  # eps = eps_rel * ||block||
    eps_abs: float = 0.0  # when > 0, overrides the relative rule
    tau: float = 0.0
    seed: int = 20
    invert_lls: bool = False
    workers: int = 1
    data_dir: str = ""
    output_dir: str = "results"
    synthetic: bool = False
    synth_atoms_per_class: int = 6
    synth_sparsity: int = 3
    synth_noise_sigma: float = 0.05
    synth_samples_per_class: int = 40

    def __post_init__(self):
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if not self.block_sizes:
            raise ValueError("at least one block size required")
        for b in self.block_sizes:
            if b < 1 or self.roi_size % b != 0:
                raise ValueError(f"block size {b} does not divide roi_size {self.roi_size}")
        if self.dl_mode not in MODES:
            raise ValueError(f"dl_mode must be one of {MODES}, got {self.dl_mode!r}")
        if self.decision not in DECISIONS:
            raise ValueError(f"decision must be one of {DECISIONS}, got {self.decision!r}")
        if self.eps_rel <= 0 and self.eps_abs <= 0:
            raise ValueError("one of eps_rel / eps_abs must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def train_params(self) -> TrainParams:
        return TrainParams(
            K=self.dict_size if self.dict_size > 0 else None,
            T=self.sparsity,
            alpha=self.alpha,
            beta=self.beta,
            iterations=self.iterations,
            seed=self.seed,
        )

    def synth_spec(self, block_size: int | None = None) -> SynthSpec:
        return SynthSpec(
            roi_size=self.roi_size,
            block_size=block_size or self.block_sizes[0],
            atoms_per_class=self.synth_atoms_per_class,
            sparsity=self.synth_sparsity,
            noise_sigma=self.synth_noise_sigma,
            samples_per_class=self.synth_samples_per_class,
        )

    def echo(self) -> dict:
        """Semantic fields only; runtime knobs (workers, paths) are excluded
        so reports stay byte-identical across thread counts and machines."""
        skip = {"workers", "data_dir", "output_dir"}
        out = {}
        for f in fields(self):
            if f.name in skip:
                continue
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        try:
            return _BOOL[raw.lower()]
        except KeyError:
            raise ValueError(f"config key {name}: expected a boolean, got {raw!r}") from None
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if target_type is str:
        return raw
    if target_type is tuple:
        return tuple(int(tok) for tok in raw.replace(",", " ").split())
    raise ValueError(f"config key {name}: unsupported type")


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines ('#' comments allowed) into a config."""
    type_map = {f.name: (tuple if f.name == "block_sizes" else type(getattr(ExperimentConfig(), f.name))) for f in fields(ExperimentConfig)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {body!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in type_map:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, type_map[key])
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in type_map:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = tuple(val) if key == "block_sizes" and not isinstance(val, tuple) else val
    return ExperimentConfig(**values)


def load_config(path: str | None, overrides: dict | None = None) -> ExperimentConfig:
    text = ""
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    return parse_config_text(text, overrides)


def with_axes(cfg: ExperimentConfig, decision: str, k_folds: int, dl_mode: str) -> ExperimentConfig:
    return replace(cfg, decision=decision, k_folds=k_folds, dl_mode=dl_mode)
