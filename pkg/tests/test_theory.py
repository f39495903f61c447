import numpy as np
import pytest

from conftest import zero_mean_field
from greedy_route_pde.errors import (
    DegenerateDenominator,
    NotSimultaneouslyDiagonalizable,
    SearchTooLarge,
)
from greedy_route_pde.grid import Field, GridSpec
from greedy_route_pde.operators import EquationKind, build_operator, operator_dense
from greedy_route_pde.routing import Ensemble
from greedy_route_pde.solvers import gauss_seidel_handle, jacobi_handle
from greedy_route_pde.theory import (
    alpha_of,
    brute_force_optimal,
    greedy_sequence,
    lemma_c1_identity,
    lipschitz_constant,
    phi,
    prop_c2_bound,
    sequence_value,
    spectral_value,
    supermodularity_check,
    theorem1_check,
)


def _ensemble(n=8, omegas=(0.5, 1.0), gs=False):
    g = GridSpec(1, n)
    op = build_operator(g, EquationKind.POISSON, 0.0)
    handles = [jacobi_handle(i + 1, omega=w) for i, w in enumerate(omegas)]
    if gs:
        handles.append(gauss_seidel_handle(len(handles) + 1))
    return g, op, Ensemble(op, handles)


def test_sequence_value_matches_dense_propagation():
    g, op, ens = _ensemble(gs=True)
    e0 = zero_mean_field(g, np.random.default_rng(0))
    a = operator_dense(op)
    d = np.diag(a)[0]
    proj = np.eye(8) - np.ones((8, 8)) / 8
    maps = [
        np.eye(8) - 0.5 * a / d,
        np.eye(8) - a / d,
        np.eye(8) - np.linalg.solve(np.tril(a), a),
    ]
    seq = [3, 1, 2, 3]
    e = e0.values.copy()
    for sid in seq:
        e = proj @ (maps[sid - 1] @ e)
    assert sequence_value(ens, seq, e0) == pytest.approx(e @ e, rel=1e-10)


def test_brute_force_finds_minimum_and_respects_budget():
    g, _, ens = _ensemble()
    e0 = zero_mean_field(g, np.random.default_rng(1))
    seq, val = brute_force_optimal(ens, e0, 3)
    for other in [(1, 1, 1), (2, 2, 2), (1, 2, 1)]:
        assert val <= sequence_value(ens, other, e0) + 1e-15
    assert len(seq) == 3
    with pytest.raises(SearchTooLarge):
        brute_force_optimal(ens, e0, 3, max_search=5)


def test_greedy_never_beats_brute_force():
    g, _, ens = _ensemble(gs=True)
    rng = np.random.default_rng(2)
    for _ in range(5):
        e0 = zero_mean_field(g, rng)
        _, gval = greedy_sequence(ens, e0, 4)
        _, oval = brute_force_optimal(ens, e0, 4)
        assert oval <= gval + 1e-12


def test_lipschitz_matches_dense_spectral_norm():
    g, op, ens = _ensemble(gs=True)
    a = operator_dense(op)
    d = np.diag(a)[0]
    proj = np.eye(8) - np.ones((8, 8)) / 8
    for sid, mat in ((1, np.eye(8) - 0.5 * a / d),
                     (3, np.eye(8) - np.linalg.solve(np.tril(a), a))):
        oracle = np.linalg.norm(proj @ mat @ proj, 2)
        assert lipschitz_constant(ens, sid) == pytest.approx(oracle, abs=1e-6)


def test_alpha_and_phi_formulas():
    assert alpha_of([0.5, 0.5], 4) == pytest.approx(max(4.0 / 3.5, 1.0))
    assert alpha_of([0.1], 5) == pytest.approx(1.0)  # clipped at one
    assert phi(2.0, 3) == pytest.approx((1 - 1 / 6) ** 3)
    with pytest.raises(DegenerateDenominator):
        alpha_of([1.0, 1.0], 2)


def test_theorem1_bound_holds_on_random_trials():
    g, _, ens = _ensemble(gs=True)
    rng = np.random.default_rng(3)
    for _ in range(10):
        rep = theorem1_check(ens, zero_mean_field(g, rng), 3)
        assert rep.satisfied, rep


def test_spectral_identity_for_jacobi_ensembles():
    g, _, ens = _ensemble(omegas=(0.4, 0.8, 1.0))
    rng = np.random.default_rng(4)
    for _ in range(10):
        e0 = zero_mean_field(g, rng)
        seq = list(rng.integers(1, 4, size=6))
        sv = sequence_value(ens, seq, e0)
        assert abs(spectral_value(ens, seq, e0) - sv) <= 1e-9 * max(sv, 1e-12)


def test_spectral_identity_is_order_free():
    g, _, ens = _ensemble(omegas=(0.4, 0.8))
    e0 = zero_mean_field(g, np.random.default_rng(5))
    assert spectral_value(ens, [1, 2, 2], e0) == pytest.approx(
        spectral_value(ens, [2, 2, 1], e0), rel=1e-12
    )


def test_supermodularity_rejects_noncommuting():
    g, _, ens = _ensemble(gs=True)
    with pytest.raises(NotSimultaneouslyDiagonalizable):
        supermodularity_check(ens, zero_mean_field(g, np.random.default_rng(6)), 2)


def test_supermodularity_holds_for_commuting_pair():
    g, _, ens = _ensemble(omegas=(0.5, 1.0))
    rep = supermodularity_check(ens, zero_mean_field(g, np.random.default_rng(7)), 3)
    assert rep.violations == 0
    assert rep.weak_alpha1_violations == 0


def test_single_solver_supermodularity_trivial():
    g, _, ens = _ensemble(omegas=(0.7,))
    rep = supermodularity_check(ens, zero_mean_field(g, np.random.default_rng(8)), 3)
    assert rep.violations == 0


def test_lemma_c1_and_prop_c2():
    rng = np.random.default_rng(9)
    for _ in range(50):
        k = int(rng.integers(2, 6))
        costs = rng.random(k)
        logits = rng.standard_normal(k)
        chosen = int(rng.integers(1, k + 1))
        assert lemma_c1_identity(costs, chosen)
        assert prop_c2_bound(costs, logits)
