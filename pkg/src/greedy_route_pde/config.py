"""Experiment configuration: a single YAML file with a documented key tree.

Top-level keys::

    equation: poisson | helmholtz
    dim: 1 | 2
    n: grid points per axis
    a_squared: Helmholtz coefficient (ignored for poisson)
    T: iteration count per run
    seed: base RNG seed (overridable on the command line)
    out_dir: output directory (overridable on the command line)
    ensemble: ordered list of solver specs
        - kind: jacobi | gauss_seidel | multigrid | neural
          omega: damping (jacobi; multigrid smoother)
          levels / pre_smooth / post_smooth / coarsest_n: multigrid options
          checkpoint: surrogate checkpoint path (neural)
          label: display name
    policy: {type: single|hints|greedy|learned, ...}
        single: solver_id
        hints: neural_id, classical_id, tau
        learned: checkpoint
    data: {train, val, test: dataset paths; counts: {train, val, test}}
    training: optimizer and schedule overrides (lr, weight_decay, clip_norm,
        batch_size, epochs, ss_start, gamma_tf, ss_end, e_w, w_start,
        gamma_bptt, f_bptt)
    metrics: {error_auc, residual_auc: bool; modes: [int, ...]}
    compare: {policies: [{name, ...policy spec...}, ...]}
    theory: {n, T, trials, omegas: [...]} for the verification report

Unknown keys raise ConfigParse so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Dict, List, Optional

import yaml

from .errors import ConfigParse, MissingCheckpoint
from .grid import GridSpec
from .operators import EquationKind, build_operator
from .solvers import (
    MgConfig,
    default_mg_levels,
    gauss_seidel_handle,
    jacobi_handle,
    multigrid_handle,
    neural_handle,
)
from .training import TrainConfig

_TOP_KEYS = {
    "equation", "dim", "n", "a_squared", "T", "seed", "out_dir", "ensemble",
    "policy", "data", "training", "metrics", "compare", "theory",
}
_SOLVER_KEYS = {
    "kind", "omega", "levels", "pre_smooth", "post_smooth", "coarsest_n",
    "checkpoint", "label",
}
_POLICY_KEYS = {
    "type", "name", "solver_id", "neural_id", "classical_id", "tau",
    "checkpoint",
}


@dataclass
class SolverSpec:
    kind: str
    omega: float = 2.0 / 3.0
    levels: Optional[int] = None
    pre_smooth: int = 3
    post_smooth: int = 3
    coarsest_n: int = 4
    checkpoint: Optional[str] = None
    label: Optional[str] = None


@dataclass
class PolicySpec:
    type: str
    name: Optional[str] = None
    solver_id: int = 1
    neural_id: int = 1
    classical_id: int = 2
    tau: int = 25
    checkpoint: Optional[str] = None


@dataclass
class DataSpec:
    train: Optional[str] = None
    val: Optional[str] = None
    test: Optional[str] = None
    counts: Dict[str, int] = dc_field(
        default_factory=lambda: {"train": 64, "val": 32, "test": 64}
    )


@dataclass
class MetricSpec:
    error_auc: bool = True
    residual_auc: bool = True
    modes: List[int] = dc_field(default_factory=list)


@dataclass
class TheorySpec:
    n: int = 8
    T: int = 4
    trials: int = 200
    omegas: List[float] = dc_field(default_factory=lambda: [0.5, 1.0])


@dataclass
class ExperimentConfig:
    equation: str = "poisson"
    dim: int = 1
    n: int = 65
    a_squared: float = 1.0
    T: int = 300
    seed: int = 0
    out_dir: str = "out"
    ensemble: List[SolverSpec] = dc_field(default_factory=list)
    policy: Optional[PolicySpec] = None
    data: DataSpec = dc_field(default_factory=DataSpec)
    training: TrainConfig = dc_field(default_factory=TrainConfig)
    metrics: MetricSpec = dc_field(default_factory=MetricSpec)
    compare: List[PolicySpec] = dc_field(default_factory=list)
    theory: TheorySpec = dc_field(default_factory=TheorySpec)

    def __post_init__(self):
        if self.equation not in ("poisson", "helmholtz"):
            raise ConfigParse(
                f"equation must be poisson or helmholtz, got {self.equation!r}"
            )
        if self.dim not in (1, 2):
            raise ConfigParse(f"dim must be 1 or 2, got {self.dim}")
        if self.T < 1:
            raise ConfigParse(f"T must be >= 1, got {self.T}")
        half = self.n / 2
        for m in self.metrics.modes:
            if not 0 <= m < half:
                raise ConfigParse(f"mode index {m} must satisfy 0 <= m < n/2")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.dim, self.n)

    def operator(self):
        kind = (EquationKind.POISSON if self.equation == "poisson"
                else EquationKind.HELMHOLTZ)
        shift = 0.0 if kind is EquationKind.POISSON else self.a_squared
        return build_operator(self.grid, kind, shift)


def _check_keys(mapping: dict, allowed: set, where: str) -> None:
    extra = set(mapping) - allowed
    if extra:
        raise ConfigParse(f"unknown key(s) {sorted(extra)} in {where}")


def _parse_solver(raw: dict, pos: int) -> SolverSpec:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigParse(f"ensemble entry {pos} must be a mapping with 'kind'")
    _check_keys(raw, _SOLVER_KEYS, f"ensemble entry {pos}")
    spec = SolverSpec(**raw)
    if spec.kind not in ("jacobi", "gauss_seidel", "multigrid", "neural"):
        raise ConfigParse(f"unknown solver kind {spec.kind!r}")
    if spec.kind == "neural" and not spec.checkpoint:
        raise ConfigParse(f"ensemble entry {pos}: neural solver needs a "
                          "'checkpoint' path")
    return spec


def _parse_policy(raw: dict, where: str) -> PolicySpec:
    if not isinstance(raw, dict) or "type" not in raw:
        raise ConfigParse(f"{where} must be a mapping with 'type'")
    _check_keys(raw, _POLICY_KEYS, where)
    spec = PolicySpec(**raw)
    if spec.type not in ("single", "hints", "greedy", "learned"):
        raise ConfigParse(f"unknown policy type {spec.type!r} in {where}")
    if spec.type == "learned" and not spec.checkpoint:
        raise ConfigParse(f"{where}: learned policy needs a 'checkpoint' path")
    return spec


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment config."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParse(f"invalid YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigParse(f"config root must be a mapping, got {type(raw).__name__}")
    _check_keys(raw, _TOP_KEYS, "config root")
    kwargs = dict(raw)
    if "ensemble" in kwargs:
        kwargs["ensemble"] = [
            _parse_solver(entry, pos)
            for pos, entry in enumerate(kwargs["ensemble"], start=1)
        ]
    if "policy" in kwargs and kwargs["policy"] is not None:
        kwargs["policy"] = _parse_policy(kwargs["policy"], "policy")
    if "data" in kwargs:
        data = kwargs["data"] or {}
        _check_keys(data, {"train", "val", "test", "counts"}, "data")
        kwargs["data"] = DataSpec(**data)
    if "training" in kwargs:
        tr = kwargs["training"] or {}
        try:
            kwargs["training"] = TrainConfig(**tr)
        except (TypeError, ValueError) as exc:
            raise ConfigParse(f"bad training block: {exc}") from exc
    if "metrics" in kwargs:
        met = kwargs["metrics"] or {}
        _check_keys(met, {"error_auc", "residual_auc", "modes"}, "metrics")
        kwargs["metrics"] = MetricSpec(**met)
    if "compare" in kwargs:
        cmp_block = kwargs["compare"] or {}
        _check_keys(cmp_block, {"policies"}, "compare")
        kwargs["compare"] = [
            _parse_policy(entry, f"compare policy {pos}")
            for pos, entry in enumerate(cmp_block.get("policies", []), start=1)
        ]
    if "theory" in kwargs:
        th = kwargs["theory"] or {}
        _check_keys(th, {"n", "T", "trials", "omegas"}, "theory")
        kwargs["theory"] = TheorySpec(**th)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigParse(f"bad config value: {exc}") from exc


def build_handles(cfg: ExperimentConfig, op=None):
    """Instantiate solver handles (loading surrogate checkpoints) for cfg."""
    from .neural.checkpoint import KIND_DEEPONET, checkpoint_load

    if op is None:
        op = cfg.operator()
    if not cfg.ensemble:
        raise ConfigParse("config has an empty 'ensemble' list")
    handles = []
    for pos, spec in enumerate(cfg.ensemble, start=1):
        label = spec.label or f"{spec.kind}-{pos}"
        if spec.kind == "jacobi":
            handles.append(jacobi_handle(pos, omega=spec.omega, label=label))
        elif spec.kind == "gauss_seidel":
            handles.append(gauss_seidel_handle(pos, label=label))
        elif spec.kind == "multigrid":
            levels = spec.levels or default_mg_levels(cfg.n, spec.coarsest_n)
            mg = MgConfig(levels=levels, pre_smooth=spec.pre_smooth,
                          post_smooth=spec.post_smooth, omega=spec.omega,
                          coarsest_n=spec.coarsest_n)
            handles.append(multigrid_handle(pos, op, mg, label=label))
        else:
            if not Path(spec.checkpoint).exists():
                raise MissingCheckpoint(
                    f"surrogate checkpoint not found: {spec.checkpoint}"
                )
            model, _ = checkpoint_load(spec.checkpoint,
                                       expect_kind=KIND_DEEPONET)
            handles.append(neural_handle(pos, model, label=label))
    return op, handles
