"""The hybrid iteration and its routing policies.

Each step applies one solver from the ensemble to the current residual:
``u <- u + C_j(f - L u)``. Policies decide ``j`` per step: a fixed single
solver, the HINTS fixed schedule, the omniscient greedy rule (argmin of the
one-step-lookahead error over the ensemble, using the true reference
solution), or a trained LSTM router. Also houses the routing loss, its convex
cost-weighted cross-entropy surrogate, and the surrogate's closed-form
gradient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .errors import (
    BadId,
    BadTau,
    DivergedIterate,
    EmptyCosts,
    LengthMismatch,
    NonFiniteField,
    ShapeMismatch,
)
from .grid import Field, check_same_grid
from .neural.autodiff import Tensor
from .operators import (
    DiscreteOperator,
    apply_operator,
    project_zero_mean,
    reference_solution,
    residual,
)
from .solvers import SolverHandle, apply_solver


@dataclass
class Ensemble:
    """Ordered solver handles sharing one discrete operator; ids are 1..K."""

    op: DiscreteOperator
    handles: List[SolverHandle]

    def __post_init__(self):
        if not self.handles:
            raise EmptyCosts("ensemble must contain at least one solver")
        for pos, handle in enumerate(self.handles, start=1):
            if handle.id != pos:
                raise BadId(f"handle ids must be 1..K in order, got {handle.id}"
                            f" at position {pos}")

    @property
    def size(self) -> int:
        return len(self.handles)

    def handle(self, id: int) -> SolverHandle:
        if not 1 <= id <= self.size:
            raise BadId(f"solver id {id} outside 1..{self.size}")
        return self.handles[id - 1]


# -- policies ---------------------------------------------------------------


@dataclass(frozen=True)
class SingleSolver:
    solver_id: int


@dataclass(frozen=True)
class Hints:
    neural_id: int
    classical_id: int
    tau: int

    def __post_init__(self):
        if self.tau < 2:
            raise BadTau(f"tau must be >= 2, got {self.tau}")


@dataclass(frozen=True)
class GreedyOracle:
    pass


@dataclass
class Learned:
    model: object  # LstmRouter


@dataclass
class RouteTrace:
    """Per-iteration record of a hybrid run."""

    chosen: List[int] = dc_field(default_factory=list)
    error_norms: List[float] = dc_field(default_factory=list)
    residual_norms: List[float] = dc_field(default_factory=list)
    costs: Optional[List[np.ndarray]] = None
    final: Optional[Field] = None

    @property
    def steps(self) -> int:
        return len(self.chosen)

    def error_auc(self) -> float:
        """Sum of error norms over steps 1..T."""
        return float(sum(self.error_norms[1:]))

    def to_csv(self, path) -> None:
        """Write one row per iteration (steps 1..T); step 0 norms are not
        rows, they live in the summary emitted alongside the trace."""
        k = len(self.costs[0]) if self.costs else 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["step", "chosen_id", "error_norm", "residual_norm"]
            header += [f"cost_{j + 1}" for j in range(k)]
            writer.writerow(header)
            for t in range(1, self.steps + 1):
                row = [t, self.chosen[t - 1],
                       repr(self.error_norms[t]), repr(self.residual_norms[t])]
                if k:
                    row += [repr(float(c)) for c in self.costs[t - 1]]
                writer.writerow(row)


# -- selection rules --------------------------------------------------------


def step_costs(ens: Ensemble, e: Field) -> np.ndarray:
    """One-step-lookahead squared error norms, one entry per solver."""
    check_same_grid(ens.op.grid, e.grid)
    synth = apply_operator(ens.op, e)
    costs = np.zeros(ens.size)
    for i, handle in enumerate(ens.handles):
        corr = apply_solver(handle, ens.op, synth)
        new_err = e.values - corr.values
        if ens.op.is_singular():
            new_err = new_err - new_err.mean()
        costs[i] = float(new_err @ new_err)
    return costs


def greedy_select(costs: np.ndarray) -> int:
    """Argmin cost; ties break to the lowest solver id."""
    if len(costs) == 0:
        raise EmptyCosts("empty cost vector")
    return int(np.argmin(costs)) + 1


def hints_select(t: int, tau: int, neural_id: int, classical_id: int) -> int:
    """Neural solver when t is a multiple of tau, classical otherwise."""
    if tau < 2:
        raise BadTau(f"tau must be >= 2, got {tau}")
    return neural_id if t % tau == 0 else classical_id


def learned_select(model, features: np.ndarray, state):
    """Argmax of router logits (ties to lowest id); advances the state."""
    x = Tensor(features.reshape(1, -1))
    logits, new_state = model.step(x, state)
    vec = logits.data.ravel()
    return int(np.argmax(vec)) + 1, new_state


def router_features(r: Field, f: Field) -> np.ndarray:
    """Router input: concatenated residual and forcing."""
    return np.concatenate([r.values, f.values])


# -- the hybrid iteration ---------------------------------------------------


def run_hybrid(
    ens: Ensemble,
    policy,
    f: Field,
    T: int,
    u0: Optional[Field] = None,
    record_costs: Optional[bool] = None,
) -> RouteTrace:
    """Run the hybrid iteration for T steps and record the full trace.

    Error norms are measured against the exact reference solution; for the
    singular Poisson operator both iterate and reference are projected to the
    zero-mean subspace first.
    """
    op = ens.op
    check_same_grid(op.grid, f.grid)
    if T < 0:
        raise BadId(f"T must be >= 0, got {T}")
    u = u0.copy() if u0 is not None else Field.zeros(op.grid)
    u_ref = reference_solution(op, f)
    oracle = isinstance(policy, GreedyOracle)
    if record_costs is None:
        record_costs = oracle
    trace = RouteTrace(costs=[] if record_costs else None)
    state = policy.model.init_state() if isinstance(policy, Learned) else None

    def err_norm(u_now: Field) -> float:
        e = u_ref.values - u_now.values
        if op.is_singular():
            e = e - e.mean()
        return float(np.linalg.norm(e))

    trace.error_norms.append(err_norm(u))
    trace.residual_norms.append(residual(op, u, f).norm())

    for t in range(1, T + 1):
        try:
            r = residual(op, u, f)
            e = Field(op.grid, u_ref.values - u.values)
            if op.is_singular():
                e = project_zero_mean(e)
            costs = None
            if isinstance(policy, SingleSolver):
                chosen = ens.handle(policy.solver_id).id
            elif isinstance(policy, Hints):
                ens.handle(policy.neural_id)
                ens.handle(policy.classical_id)
                chosen = hints_select(t, policy.tau, policy.neural_id,
                                      policy.classical_id)
            elif isinstance(policy, GreedyOracle):
                costs = step_costs(ens, e)
                chosen = greedy_select(costs)
            elif isinstance(policy, Learned):
                chosen, state = learned_select(
                    policy.model, router_features(r, f), state
                )
                if chosen > ens.size:
                    raise ShapeMismatch(
                        f"router head width exceeds ensemble size {ens.size}"
                    )
            else:
                raise BadId(f"unknown policy {policy!r}")
            if record_costs:
                if costs is None:
                    costs = step_costs(ens, e)
                trace.costs.append(costs)
            corr = apply_solver(ens.handle(chosen), op, r)
            new_values = u.values + corr.values
            if not np.all(np.isfinite(new_values)):
                raise NonFiniteField("iterate overflowed")
            u = Field(op.grid, new_values)
            trace.chosen.append(chosen)
            trace.error_norms.append(err_norm(u))
            trace.residual_norms.append(residual(op, u, f).norm())
        except NonFiniteField as exc:
            raise DivergedIterate(
                f"iterate diverged at step {t}: {exc}", trace=trace
            ) from exc

    trace.final = u
    return trace


# -- losses -----------------------------------------------------------------


def routing_loss(costs: np.ndarray, chosen: int) -> float:
    """Cost of the chosen solver: the post-step squared error norm."""
    if not 1 <= chosen <= len(costs):
        raise BadId(f"chosen id {chosen} outside 1..{len(costs)}")
    return float(costs[chosen - 1])


def _complement_weights(costs: np.ndarray) -> np.ndarray:
    """w_j = sum of all costs except the j-th."""
    return costs.sum() - costs


def surrogate_loss(costs: np.ndarray, logits: np.ndarray) -> float:
    """Cost-weighted cross-entropy over the router logits (convex in logits)."""
    costs = np.asarray(costs, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if costs.shape != logits.shape:
        raise LengthMismatch(
            f"costs shape {costs.shape} vs logits shape {logits.shape}"
        )
    z = logits - logits.max()
    log_p = z - np.log(np.exp(z).sum())
    w = _complement_weights(costs)
    return float(-(w * log_p).sum())


def surrogate_grad(costs: np.ndarray, logits: np.ndarray) -> np.ndarray:
    """Analytic gradient of the surrogate loss in the logits."""
    costs = np.asarray(costs, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if costs.shape != logits.shape:
        raise LengthMismatch(
            f"costs shape {costs.shape} vs logits shape {logits.shape}"
        )
    z = logits - logits.max()
    p = np.exp(z) / np.exp(z).sum()
    w = _complement_weights(costs)
    return w.sum() * p - w


def surrogate_loss_node(costs: np.ndarray, logits: "Tensor") -> "Tensor":
    """Graph version of the surrogate loss for router training."""
    if logits.data.size != len(costs):
        raise LengthMismatch(
            f"{len(costs)} costs vs {logits.data.size} logits"
        )
    w = Tensor(_complement_weights(np.asarray(costs, dtype=np.float64)))
    return -(w * logits.log_softmax()).sum()
