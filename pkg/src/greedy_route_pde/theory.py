"""Numerical verification of the greedy suboptimality and surrogate bounds.

Everything here is checked by direct computation: exhaustive enumeration for
optimal sequences and supermodularity, measured contraction factors for the
approximation-ratio constant, and a diagonalized fast path for ensembles whose
error-propagation maps share the Fourier eigenbasis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import (
    BadId,
    DegenerateDenominator,
    NoConvergence,
    NonlinearSolver,
    NotSimultaneouslyDiagonalizable,
    SearchTooLarge,
)
from .grid import Field
from .operators import (
    DiscreteOperator,
    apply_operator,
    laplacian_symbol,
)
from .routing import Ensemble, greedy_select, routing_loss, step_costs, surrogate_loss
from .solvers import JACOBI, apply_solver, error_propagation_matrix


def _propagate(ens: Ensemble, solver_id: int, e: Field) -> Field:
    """One error-propagation step: e <- e - C_j(L e)."""
    corr = apply_solver(ens.handle(solver_id), ens.op, apply_operator(ens.op, e))
    new = e.values - corr.values
    if ens.op.is_singular():
        new = new - new.mean()
    return Field(ens.op.grid, new)


def sequence_value(ens: Ensemble, seq: Sequence[int], e0: Field) -> float:
    """Squared error norm after applying the sequence, first element first."""
    e = e0.copy()
    for sid in seq:
        if not 1 <= sid <= ens.size:
            raise BadId(f"solver id {sid} outside 1..{ens.size}")
        e = _propagate(ens, sid, e)
    return float(e.values @ e.values)


def greedy_sequence(ens: Ensemble, e0: Field, T: int) -> Tuple[List[int], float]:
    """Greedy rollout on the true error; returns (sequence, final value)."""
    e = e0.copy()
    seq = []
    for _ in range(T):
        costs = step_costs(ens, e)
        sid = greedy_select(costs)
        seq.append(sid)
        e = _propagate(ens, sid, e)
    return seq, float(e.values @ e.values)


def brute_force_optimal(
    ens: Ensemble, e0: Field, T: int, max_search: int = 10**6
) -> Tuple[Tuple[int, ...], float]:
    """Exact minimizer over all K^T sequences; ties to lexicographic order."""
    if ens.size**T > max_search:
        raise SearchTooLarge(f"K^T = {ens.size ** T} exceeds {max_search}")
    if T == 0:
        return (), float(e0.values @ e0.values)
    best_seq, best_val = None, np.inf
    # lexicographic enumeration + strict comparison keeps the smallest tie
    for seq in itertools.product(range(1, ens.size + 1), repeat=T):
        val = sequence_value(ens, seq, e0)
        if val < best_val:
            best_seq, best_val = seq, val
    return best_seq, best_val


def lipschitz_constant(
    ens: Ensemble, solver_id: int, tol: float = 1e-8, max_iter: int = 5000
) -> float:
    """Spectral norm of I - C_j L on the solvable subspace.

    Power iteration on M^T M, with iterates projected to the zero-mean
    subspace when the operator is singular.
    """
    handle = ens.handle(solver_id)
    if not handle.is_linear:
        raise NonlinearSolver("Lipschitz constant requires a linear solver")
    op = ens.op
    npts = op.grid.npoints
    mat = error_propagation_matrix(handle, op)
    if op.is_singular():
        proj = np.eye(npts) - np.ones((npts, npts)) / npts
        mat = proj @ mat @ proj
    mtm = mat.T @ mat
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(npts)
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        w = mtm @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - prev) <= tol * max(norm, 1.0):
            return float(np.sqrt(norm))
        prev = norm
    raise NoConvergence("power iteration did not converge")


def alpha_of(rhos: Sequence[float], T: int) -> float:
    """Approximation-ratio constant from the optimal sequence's contractions."""
    rho_sq = sum(r * r for r in rhos)
    denom = T - rho_sq
    if denom <= 0:
        raise DegenerateDenominator(
            f"sum of squared contractions {rho_sq} >= T={T}"
        )
    return max(4.0 / denom, 1.0)


def phi(alpha: float, T: int) -> float:
    return (1.0 - 1.0 / (alpha * T)) ** T


@dataclass
class BoundReport:
    greedy_value: float
    optimal_value: float
    empty_value: float
    optimal_sequence: Tuple[int, ...]
    alpha: float
    phi: float
    bound: float
    satisfied: bool
    slack: float


def theorem1_check(
    ens: Ensemble, e0: Field, T: int, abs_slack: float = 1e-12
) -> BoundReport:
    """Compare the greedy value against the enumerated-optimum bound."""
    _, greedy_val = greedy_sequence(ens, e0, T)
    opt_seq, opt_val = brute_force_optimal(ens, e0, T)
    empty_val = float(e0.values @ e0.values)
    rhos = [lipschitz_constant(ens, sid) for sid in opt_seq]
    a = alpha_of(rhos, T)
    ph = phi(a, T)
    bound = (1.0 - ph) * opt_val + ph * empty_val
    slack = bound - greedy_val
    return BoundReport(
        greedy_value=greedy_val, optimal_value=opt_val, empty_value=empty_val,
        optimal_sequence=tuple(opt_seq), alpha=a, phi=ph, bound=bound,
        satisfied=slack >= -abs_slack, slack=slack,
    )


# -- diagonalized ensembles -------------------------------------------------


def _propagation_eigenvalues(ens: Ensemble) -> np.ndarray:
    """Per-solver eigenvalues of I - C_j L in Fourier mode order, (K, N).

    Only weighted-Jacobi solvers have circulant preconditioners here; anything
    else does not share the Fourier eigenbasis.
    """
    op = ens.op
    lam = (laplacian_symbol(op.grid) - op.shift).ravel()
    rows = []
    for handle in ens.handles:
        if handle.kind != JACOBI:
            raise NotSimultaneouslyDiagonalizable(
                f"solver kind {handle.kind!r} is not DFT-diagonal"
            )
        rows.append(1.0 - handle.omega * lam / op.diagonal)
    return np.stack(rows)


def spectral_value(ens: Ensemble, seq: Sequence[int], e0: Field) -> float:
    """Sequence value via the shared-eigenbasis identity (order-free)."""
    mu = _propagation_eigenvalues(ens)
    from .operators import dft  # local import to avoid cycle at module load

    z = dft(e0).ravel()
    zsq = np.abs(z) ** 2
    if ens.op.is_singular():
        zsq = zsq.copy()
        zsq[0] = 0.0
    counts = np.zeros(ens.size, dtype=int)
    for sid in seq:
        if not 1 <= sid <= ens.size:
            raise BadId(f"solver id {sid} outside 1..{ens.size}")
        counts[sid - 1] += 1
    factors = np.prod(mu ** (2 * counts[:, None]), axis=0)
    return float((zsq * factors).sum())


@dataclass
class SupermodularityReport:
    trials: int
    violations: int
    worst_slack: float
    weak_alpha1_trials: int
    weak_alpha1_violations: int
    violating_triples: list


def supermodularity_check(
    ens: Ensemble, e0: Field, T: int, slack: float = 1e-12
) -> SupermodularityReport:
    """Exhaustive diminishing-returns check for commuting ensembles.

    Asserts the prefix form (appending a solver helps a prefix at least as
    much as the extended sequence) and the weak form with ratio 1 over all
    sequences up to length T.
    """
    _propagation_eigenvalues(ens)  # raises if not commuting
    ids = range(1, ens.size + 1)
    value_cache = {}

    def val(seq: Tuple[int, ...]) -> float:
        if seq not in value_cache:
            value_cache[seq] = sequence_value(ens, seq, e0)
        return value_cache[seq]

    trials = violations = 0
    worst = np.inf
    bad = []
    all_seqs = [
        seq
        for length in range(T + 1)
        for seq in itertools.product(ids, repeat=length)
    ]
    for sp in all_seqs:
        for cut in range(len(sp) + 1):
            s = sp[:cut]
            if s == sp:
                continue
            for w in ids:
                lhs = val(s) - val(s + (w,))
                rhs = val(sp) - val(sp + (w,))
                margin = lhs - rhs
                trials += 1
                worst = min(worst, margin)
                if margin < -slack:
                    violations += 1
                    if len(bad) < 10:
                        bad.append((s, sp, w, margin))
    # weak supermodularity with alpha = 1 against every same-length sequence
    weak_trials = weak_violations = 0
    for sp in all_seqs:
        if not sp:
            continue
        for s in itertools.product(ids, repeat=len(sp)):
            lhs = val(s) - val(tuple(s) + tuple(sp))
            rhs = sum(val(s) - val(tuple(s) + (oi,)) for oi in sp)
            weak_trials += 1
            if lhs > rhs + slack:
                weak_violations += 1
                if len(bad) < 10:
                    bad.append((s, sp, None, rhs - lhs))
    return SupermodularityReport(
        trials=trials, violations=violations,
        worst_slack=float(worst if trials else 0.0),
        weak_alpha1_trials=weak_trials,
        weak_alpha1_violations=weak_violations,
        violating_triples=bad,
    )


# -- surrogate-loss identities ----------------------------------------------


def lemma_c1_identity(costs: np.ndarray, chosen: int, tol: float = 1e-10) -> bool:
    """Rewriting identity between the routing loss and its complement form."""
    costs = np.asarray(costs, dtype=np.float64)
    k = len(costs)
    lhs = routing_loss(costs, chosen)
    total = costs.sum()
    rhs = sum(
        (total - costs[j]) for j in range(k) if (j + 1) != chosen
    ) - (k - 2) * total
    return abs(lhs - rhs) <= tol * max(1.0, abs(lhs))


def prop_c2_bound(costs: np.ndarray, logits: np.ndarray,
                  tol: float = 1e-10) -> bool:
    """log(2) * routing loss of the argmax decision <= surrogate loss."""
    costs = np.asarray(costs, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    chosen = int(np.argmax(logits)) + 1
    lhs = np.log(2.0) * routing_loss(costs, chosen)
    rhs = surrogate_loss(costs, logits)
    return lhs <= rhs + tol
