"""Acceptance suite: property checks plus scaled-down experiment reproductions.

Criteria 1..9 are randomized property checks against independent oracles.
Criteria 10..14 rerun the headline experiments at desk scale (1D zero-shift
diffusion, n = 65, T = 300, 64 test instances) and assert the qualitative
orderings; absolute values depend on stochastic training and are not asserted.
Each criterion prints one PASS/FAIL line.

The multigrid rows run at n = 64 because the geometric hierarchy needs n
divisible by a power of two; everything else uses n = 65.
"""

import time

import numpy as np
import pytest

from conftest import numeric_grad, rel_err, zero_mean_field
from greedy_route_pde.grf import GrfSpec, generate_dataset, mode_std, sample_grf, sample_rng
from greedy_route_pde.grid import Field, GridSpec
from greedy_route_pde.neural.autodiff import Tensor
from greedy_route_pde.neural.layers import DeepOnetModel, LstmRouter, Mlp
from greedy_route_pde.operators import (
    EquationKind,
    build_operator,
    dft,
    operator_dense,
    reference_solution,
)
from greedy_route_pde.routing import (
    Ensemble,
    GreedyOracle,
    Hints,
    Learned,
    SingleSolver,
    greedy_select,
    run_hybrid,
    surrogate_grad,
)
from greedy_route_pde.solvers import (
    error_propagation_matrix,
    gauss_seidel_handle,
    jacobi_handle,
    multigrid_handle,
    neural_handle,
)
from greedy_route_pde.theory import (
    lemma_c1_identity,
    prop_c2_bound,
    sequence_value,
    spectral_value,
    supermodularity_check,
    theorem1_check,
)
from greedy_route_pde.training import TrainConfig, evaluate, train_deeponet, train_router

_T0 = time.time()

N_DESK = 65
T_DESK = 300
N_TEST = 64


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:02d} {name}: {status} {detail}".rstrip())
    assert ok, f"criterion {num} ({name}) failed: {detail}"


# -- shared desk-scale artifacts --------------------------------------------


@pytest.fixture(scope="module")
def desk_grid():
    return GridSpec(1, N_DESK)


@pytest.fixture(scope="module")
def desk_op(desk_grid):
    return build_operator(desk_grid, EquationKind.POISSON, 0.0)


@pytest.fixture(scope="module")
def test_ds(desk_grid):
    return generate_dataset(desk_grid, N_TEST, EquationKind.POISSON, seed=500)


@pytest.fixture(scope="module")
def deeponet(desk_grid):
    train = generate_dataset(desk_grid, 2000, EquationKind.POISSON, seed=100)
    val = generate_dataset(desk_grid, 200, EquationKind.POISSON, seed=101)
    cfg = TrainConfig(epochs=40, batch_size=32, seed=0)
    model, _ = train_deeponet(train, val, cfg)
    return model


@pytest.fixture(scope="module")
def neural_ens(desk_op, deeponet):
    # the damped smoother (omega = 2/3) keeps near-Nyquist modes contractive;
    # with omega = 1 the surrogate's high-frequency output noise is never
    # damped and the alternation baseline blows up at this grid size
    return Ensemble(desk_op, [jacobi_handle(1, omega=2.0 / 3.0),
                              neural_handle(2, deeponet)])


@pytest.fixture(scope="module")
def jacobi_eval(desk_op, test_ds):
    ens = Ensemble(desk_op, [jacobi_handle(1, omega=2.0 / 3.0)])
    return evaluate(ens, SingleSolver(1), test_ds, T_DESK)


@pytest.fixture(scope="module")
def hints_eval(neural_ens, test_ds):
    return evaluate(neural_ens, Hints(neural_id=2, classical_id=1, tau=25),
                    test_ds, T_DESK)


@pytest.fixture(scope="module")
def greedy_eval(neural_ens, test_ds):
    return evaluate(neural_ens, GreedyOracle(), test_ds, T_DESK)


@pytest.fixture(scope="module")
def router_artifacts(neural_ens, desk_grid):
    train = generate_dataset(desk_grid, 64, EquationKind.POISSON, seed=200)
    val = generate_dataset(desk_grid, 16, EquationKind.POISSON, seed=201)
    # single-trajectory updates and a fast teacher-forcing decay: the router
    # only learns when to refire the surrogate from states its own policy
    # visits, so most of the schedule runs in free-running mode
    cfg = TrainConfig(epochs=24, batch_size=1, seed=0, t_max=T_DESK,
                      w_start=30, e_w=4, gamma_tf=0.8)
    model, history = train_router(neural_ens, train, val, cfg, T_DESK)
    return model, history, val


# -- property-based criteria ------------------------------------------------


def test_criterion_01_greedy_suboptimality_bound():
    g = GridSpec(1, 8)
    op = build_operator(g, EquationKind.POISSON, 0.0)
    pool = [("j", 0.5), ("j", 0.67), ("j", 1.0), ("gs", None)]
    rng = np.random.default_rng(42)
    start = time.time()
    violations = 0
    for _ in range(200):
        k = int(rng.integers(1, 4))
        picks = rng.choice(len(pool), size=k, replace=False)
        handles = []
        for pos, pick in enumerate(picks, start=1):
            kind, w = pool[pick]
            handles.append(jacobi_handle(pos, omega=w) if kind == "j"
                           else gauss_seidel_handle(pos))
        ens = Ensemble(op, handles)
        T = int(rng.integers(1, 6))
        rep = theorem1_check(ens, zero_mean_field(g, rng), T)
        if not rep.satisfied:
            violations += 1
    elapsed = time.time() - start
    _report(1, "greedy suboptimality bound", violations == 0 and elapsed < 30,
            f"(200 trials, {violations} violations, {elapsed:.1f}s)")


def test_criterion_02_shared_eigenbasis_identity():
    g = GridSpec(1, 8)
    op = build_operator(g, EquationKind.POISSON, 0.0)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        k = int(rng.integers(1, 4))
        omegas = rng.choice([0.4, 0.5, 0.67, 0.8, 1.0], size=k, replace=False)
        ens = Ensemble(op, [jacobi_handle(i + 1, omega=w)
                            for i, w in enumerate(omegas)])
        e0 = zero_mean_field(g, rng)
        seq = list(rng.integers(1, k + 1, size=int(rng.integers(1, 9))))
        sv = sequence_value(ens, seq, e0)
        worst = max(worst, abs(spectral_value(ens, seq, e0) - sv) / sv)
    _report(2, "spectral product identity", worst < 1e-9,
            f"(100 sequences, worst rel err {worst:.2e})")


def test_criterion_03_supermodularity_exhaustive():
    g = GridSpec(1, 8)
    op = build_operator(g, EquationKind.POISSON, 0.0)
    ens = Ensemble(op, [jacobi_handle(1, omega=0.5), jacobi_handle(2, omega=1.0)])
    rep = supermodularity_check(ens, zero_mean_field(g, np.random.default_rng(3)), 4)
    ok = rep.violations == 0 and rep.weak_alpha1_violations == 0
    _report(3, "supermodularity (prefix and weak forms)", ok,
            f"({rep.trials}+{rep.weak_alpha1_trials} trials, "
            f"worst slack {rep.worst_slack:.2e})")


def test_criterion_04_surrogate_upper_bound():
    rng = np.random.default_rng(4)
    violations = 0
    for _ in range(10**4):
        k = int(rng.integers(2, 6))
        if not prop_c2_bound(rng.random(k), rng.standard_normal(k)):
            violations += 1
    _report(4, "log2-weighted surrogate bound", violations == 0,
            f"(10^4 pairs, {violations} violations)")


def test_criterion_05_complement_identity():
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(10**4):
        k = int(rng.integers(2, 6))
        costs = rng.random(k)
        if not lemma_c1_identity(costs, int(rng.integers(1, k + 1)),
                                 tol=1e-10):
            violations += 1
    _report(5, "loss rewriting identity", violations == 0,
            f"(10^4 instances, {violations} violations)")


def test_criterion_06_bayes_consistency():
    rng = np.random.default_rng(6)
    worst = 0.0
    decisions_ok = True
    for _ in range(100):
        k = int(rng.integers(2, 6))
        costs = rng.random(k)
        w = costs.sum() - costs
        logits = np.zeros(k)
        for _ in range(20000):
            logits -= 0.5 / w.sum() * surrogate_grad(costs, logits)
        z = logits - logits.max()
        p = np.exp(z) / np.exp(z).sum()
        worst = max(worst, np.abs(p - w / w.sum()).max())
        mins = np.flatnonzero(costs == costs.min())
        if len(mins) == 1 and int(np.argmax(logits)) + 1 != greedy_select(costs):
            decisions_ok = False
    _report(6, "Bayes-consistent minimizer", worst < 1e-6 and decisions_ok,
            f"(100 cost vectors, worst deviation {worst:.2e})")


def test_criterion_07_gradient_checks():
    worst_mlp = worst_lstm = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        mlp = Mlp([5, 7, 3], rng)
        x = Tensor(rng.standard_normal((2, 5)))
        target = rng.standard_normal((2, 3))

        def mlp_loss():
            d = mlp.forward(x) - Tensor(target)
            return (d * d).mean()

        grid = GridSpec(1, 6)
        deeponet = DeepOnetModel(grid, rng, hidden=6, p=4)
        xf = Tensor(rng.standard_normal((2, 6)))
        tf = rng.standard_normal((2, 6))

        def don_loss():
            deeponet.invalidate_cache()
            d = deeponet.forward(xf) - Tensor(tf)
            return (d * d).mean()

        lstm = LstmRouter(4, 3, rng, hidden=5, layers=2, encoder_dim=4)
        xs = [rng.standard_normal((1, 4)) for _ in range(5)]
        wv = rng.standard_normal(3)

        def lstm_loss():
            state = lstm.init_state()
            total = None
            for xi in xs:
                logits, state = lstm.step(Tensor(xi), state)
                term = (logits.log_softmax() * Tensor(wv[None, :])).sum()
                total = term if total is None else total + term
            return total

        for params, loss_fn, bucket in (
            (mlp.parameters(), mlp_loss, "mlp"),
            (deeponet.parameters(), don_loss, "mlp"),
            (lstm.parameters(), lstm_loss, "lstm"),
        ):
            for p in params:
                p.zero_grad()
            loss_fn().backward()
            for p in params:
                coords = rng.choice(p.data.size, size=min(3, p.data.size),
                                    replace=False)
                num = numeric_grad(lambda: float(loss_fn().data), p.data,
                                   coords=coords)
                err = rel_err(p.grad.ravel()[coords], num)
                if bucket == "mlp":
                    worst_mlp = max(worst_mlp, err)
                else:
                    worst_lstm = max(worst_lstm, err)
    ok = worst_mlp < 1e-5 and worst_lstm < 1e-4
    _report(7, "finite-difference gradient checks", ok,
            f"(20 seeds, worst mlp {worst_mlp:.2e}, lstm {worst_lstm:.2e})")


def test_criterion_08_classical_solver_correctness():
    g = GridSpec(1, 8)
    op = build_operator(g, EquationKind.POISSON, 0.0)
    a = operator_dense(op)
    d = np.diag(a)[0]
    eye = np.eye(8)
    errs = []
    errs.append(np.abs(error_propagation_matrix(jacobi_handle(1, omega=0.67), op)
                       - (eye - 0.67 * a / d)).max())
    errs.append(np.abs(error_propagation_matrix(gauss_seidel_handle(1), op)
                       - (eye - np.linalg.solve(np.tril(a), a))).max())
    # two-grid V-cycle against a dense reimplementation
    mgh = multigrid_handle(1, op)
    cfg = mgh.mg_config
    a_c = operator_dense(build_operator(GridSpec(1, 4), EquationKind.POISSON, 0.0))
    nc = 4
    rmat = np.zeros((nc, 8))
    pmat = np.zeros((8, nc))
    for i in range(nc):
        rmat[i, (2 * i - 1) % 8] = 0.25
        rmat[i, 2 * i] = 0.5
        rmat[i, (2 * i + 1) % 8] = 0.25
        pmat[2 * i, i] = 1.0
        pmat[2 * i + 1, i] = 0.5
        pmat[2 * i + 1, (i + 1) % nc] = 0.5
    coarse = np.linalg.pinv(a_c)
    smoother = eye - (cfg.omega / d) * a
    pre = np.linalg.matrix_power(smoother, cfg.pre_smooth)
    post = np.linalg.matrix_power(smoother, cfg.post_smooth)
    oracle_prop = post @ (eye - pmat @ coarse @ rmat @ a) @ pre
    errs.append(np.abs(error_propagation_matrix(mgh, op) - oracle_prop).max())
    oracle_ok = max(errs) < 1e-9

    g64 = GridSpec(1, 64)
    op64 = build_operator(g64, EquationKind.POISSON, 0.0)
    prop64 = error_propagation_matrix(multigrid_handle(1, op64), op64)
    proj = np.eye(64) - np.ones((64, 64)) / 64
    reduction = np.linalg.norm(proj @ prop64 @ proj, 2)

    smooth64 = error_propagation_matrix(jacobi_handle(1, omega=2.0 / 3.0), op64)
    x = np.arange(64) / 64
    smoothing = max(
        np.linalg.norm(smooth64 @ np.cos(2 * np.pi * k * x))
        / np.linalg.norm(np.cos(2 * np.pi * k * x))
        for k in range(16, 33)
    )
    ok = (oracle_ok and reduction < 0.2
          and abs(smoothing - 1.0 / 3.0) < 0.02 / 3.0)
    _report(8, "classical solvers vs dense oracles", ok,
            f"(oracle err {max(errs):.1e}, V-cycle norm {reduction:.3f}, "
            f"smoothing {smoothing:.4f})")


def test_criterion_09_grf_mode_variance():
    g = GridSpec(1, 64)
    spec = GrfSpec(grid=g, seed=9)
    sig = mode_std(spec).ravel()
    acc = np.zeros(64)
    n_samples = 10**4
    for i in range(n_samples):
        acc += np.abs(dft(sample_grf(spec, sample_rng(spec, i))).ravel()) ** 2
    acc /= n_samples
    worst = max(abs(acc[k] - sig[k] ** 2) / sig[k] ** 2 for k in (1, 2, 3, 4))
    _report(9, "random-field mode variance", worst < 0.05,
            f"(10^4 samples, worst rel dev {worst:.3f})")


# -- desk-scale experiment reproductions ------------------------------------


def test_criterion_10_single_solver_ordering():
    g = GridSpec(1, 64)
    op = build_operator(g, EquationKind.POISSON, 0.0)
    ds = generate_dataset(g, N_TEST, EquationKind.POISSON, seed=300)
    jac = evaluate(Ensemble(op, [jacobi_handle(1, omega=1.0)]),
                   SingleSolver(1), ds, T_DESK)
    gs = evaluate(Ensemble(op, [gauss_seidel_handle(1)]),
                  SingleSolver(1), ds, T_DESK)
    mg = evaluate(Ensemble(op, [multigrid_handle(1, op)]),
                  SingleSolver(1), ds, 100)
    a_j, a_g, a_m = (jac.mean_error_auc[0], gs.mean_error_auc[0],
                     mg.mean_error_auc[0])
    ok = a_g < a_j and a_m < a_g
    _report(10, "single-solver AUC ordering", ok,
            f"(MG {a_m:.3e} < GS {a_g:.3e} < Jacobi {a_j:.3e})")


def test_criterion_11_greedy_dominance(greedy_eval, hints_eval, jacobi_eval):
    a_greedy = greedy_eval.mean_error_auc[0]
    a_hints = hints_eval.mean_error_auc[0]
    a_jac = jacobi_eval.mean_error_auc[0]
    ok = a_greedy < a_hints and a_greedy < a_jac and a_hints < a_jac
    _report(11, "greedy oracle dominance", ok,
            f"(greedy {a_greedy:.3e} < alternation {a_hints:.3e} "
            f"< Jacobi {a_jac:.3e})")


def test_criterion_12_learned_router_fidelity(router_artifacts, neural_ens,
                                              test_ds, hints_eval):
    model, _history, val_ds = router_artifacts
    # agreement with the greedy choice at every state the router visits on
    # held-out instances (the lookahead costs are recorded along the rollout)
    agree = total = 0
    for i in range(val_ds.count):
        f, _ = val_ds.pair(i)
        trace = run_hybrid(neural_ens, Learned(model), f, T_DESK,
                           record_costs=True)
        for chosen, costs in zip(trace.chosen, trace.costs):
            agree += int(chosen == greedy_select(costs))
            total += 1
    agreement = agree / total
    learned = evaluate(neural_ens, Learned(model), test_ds, T_DESK)
    wins = np.mean([
        lm.error_auc < hm.error_auc
        for lm, hm in zip(learned.instances, hints_eval.instances)
    ])
    ok = agreement >= 0.80 and wins >= 0.75
    _report(12, "learned router fidelity", ok,
            f"(agreement {agreement:.3f}, beats alternation on "
            f"{wins:.0%} of instances)")


def test_criterion_13_ensemble_scaling(desk_op, test_ds):
    omegas = [1.0, 0.5, 0.67, 0.8, 0.9, 0.6]
    results = []
    for k in range(2, 7):
        ens = Ensemble(desk_op, [jacobi_handle(i + 1, omega=w)
                                 for i, w in enumerate(omegas[:k])])
        summary = evaluate(ens, GreedyOracle(), test_ds, T_DESK,
                           keep_traces=(k == 2))
        results.append(summary)
    aucs = [s.mean_error_auc for s in results]
    ok = all(aucs[i + 1][0] <= aucs[i][0] + aucs[i][1]
             for i in range(len(aucs) - 1))
    detail = " -> ".join(f"{a[0]:.3e}" for a in aucs)
    _report(13, "ensemble scaling monotonicity", ok, f"(K=2..6: {detail})")


def test_criterion_14_near_monotone_decay(desk_op, test_ds):
    ens = Ensemble(desk_op, [jacobi_handle(1, omega=1.0),
                             jacobi_handle(2, omega=0.5)])
    summary = evaluate(ens, GreedyOracle(), test_ds, T_DESK, keep_traces=True)
    increases = 0
    for m in summary.instances:
        e = m.trace.error_norms
        increases += sum(e[t + 1] > e[t] * (1 + 1e-12) for t in range(len(e) - 1))
    _report(14, "near-monotone greedy decay", increases == 0,
            f"({N_TEST} traces x {T_DESK} steps, {increases} increases)")


def test_total_runtime_under_budget():
    elapsed = time.time() - _T0
    _report(0, "desk-scale runtime budget", elapsed < 1800,
            f"({elapsed:.0f}s elapsed)")
