"""Command-line front end.

``greedy-route-pde <subcommand> --config <path> [--seed N] [--out DIR]``

Subcommands: generate-data, train-deeponet, train-router, run, compare,
verify-theory. Everything is batch: CSV and JSON outputs plus PNG figures in
the output directory. Exit codes: 0 success, 2 configuration error, 3 when a
run diverges (a partial trace is still written).

CSV schemas:

* trace.csv (run): step, chosen_id, error_norm, residual_norm
  [, cost_1..cost_K for oracle runs]; one row per iteration 1..T.
* modes.csv (run): step, mode_<m> magnitude columns; rows 0..T.
* compare_<policy>.csv: instance, final_error, error_auc, final_residual,
  residual_auc_sq; one row per test instance.
* compare_table.csv: raw (unscaled) means and standard errors per policy.
* theory_report.json: list of {name, trials, violations, worst_slack}.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from .config import (
    ExperimentConfig,
    PolicySpec,
    build_handles,
    load_config,
)
from .errors import (
    ConfigParse,
    DivergedIterate,
    GreedyRouteError,
)
from .grf import generate_dataset, load_dataset, save_dataset
from .grid import Field
from .metrics import mode_error_history
from .neural.checkpoint import KIND_ROUTER, checkpoint_load, checkpoint_save
from .operators import reference_solution, residual
from .plots import (
    plot_convergence,
    plot_mode_history,
    plot_policy_bars,
    plot_solver_choices,
)
from .routing import (
    Ensemble,
    GreedyOracle,
    Hints,
    Learned,
    SingleSolver,
    run_hybrid,
)
from .solvers import apply_solver, jacobi_handle
from .theory import (
    greedy_sequence,
    sequence_value,
    spectral_value,
    supermodularity_check,
    theorem1_check,
)
from .training import evaluate, train_deeponet, train_router

EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _load_config(path, seed, out) -> ExperimentConfig:
    cfg = load_config(path)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if out is not None:
        cfg = replace(cfg, out_dir=str(out))
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    return cfg


def _policy_name(spec: PolicySpec) -> str:
    return spec.name or spec.type


def _build_policy(spec: PolicySpec, ens: Ensemble):
    if spec.type == "single":
        return SingleSolver(solver_id=spec.solver_id)
    if spec.type == "hints":
        return Hints(neural_id=spec.neural_id, classical_id=spec.classical_id,
                     tau=spec.tau)
    if spec.type == "greedy":
        return GreedyOracle()
    model, _ = checkpoint_load(spec.checkpoint, expect_kind=KIND_ROUTER)
    return Learned(model=model)


def _dataset_path(cfg: ExperimentConfig, split: str) -> Path:
    configured = getattr(cfg.data, split)
    if configured:
        return Path(configured)
    return Path(cfg.out_dir) / f"{split}.grds"


def _load_or_generate(cfg: ExperimentConfig, split: str, seed_offset: int):
    path = _dataset_path(cfg, split)
    if path.exists():
        return load_dataset(path)
    kind = cfg.operator().kind
    return generate_dataset(cfg.grid, cfg.data.counts[split], kind,
                            shift=cfg.operator().shift,
                            seed=cfg.seed + seed_offset)


def _fail(ctx, exc, code):
    click.echo(f"error: {exc}", err=True)
    ctx.exit(code)


def _common(fn):
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Output directory override.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Base seed override.")(fn)
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="YAML experiment config.")(fn)
    return fn


@click.group()
def main():
    """Hybrid iterative solver routing experiments."""


@main.command("generate-data")
@_common
@click.pass_context
def cmd_generate_data(ctx, config_path, seed, out):
    """Sample random-field forcings with exact solutions for each split."""
    try:
        cfg = _load_config(config_path, seed, out)
        op = cfg.operator()
        for offset, split in enumerate(("train", "val", "test")):
            count = cfg.data.counts.get(split, 0)
            if count <= 0:
                continue
            ds = generate_dataset(cfg.grid, count, op.kind, shift=op.shift,
                                  seed=cfg.seed + offset)
            path = _dataset_path(cfg, split)
            path.parent.mkdir(parents=True, exist_ok=True)
            save_dataset(ds, path)
            click.echo(f"wrote {count} instances to {path}")
    except GreedyRouteError as exc:
        _fail(ctx, exc, EXIT_CONFIG)


@main.command("train-deeponet")
@_common
@click.pass_context
def cmd_train_deeponet(ctx, config_path, seed, out):
    """Fit the branch/trunk surrogate by regression on a dataset."""
    try:
        cfg = _load_config(config_path, seed, out)
        train_ds = _load_or_generate(cfg, "train", 0)
        val_ds = _load_or_generate(cfg, "val", 1)
        out_dir = Path(cfg.out_dir)
        tc = replace(cfg.training, seed=cfg.seed)
        model, history = train_deeponet(
            train_ds, val_ds, tc,
            log_path=out_dir / "deeponet_training.csv",
        )
        ckpt = out_dir / "deeponet.grck"
        checkpoint_save(model, ckpt)
        best = min(h.val_loss for h in history)
        click.echo(f"saved surrogate to {ckpt} (best val loss {best:.6e})")
    except GreedyRouteError as exc:
        _fail(ctx, exc, EXIT_CONFIG)


@main.command("train-router")
@_common
@click.pass_context
def cmd_train_router(ctx, config_path, seed, out):
    """Train the recurrent router against greedy labels."""
    try:
        cfg = _load_config(config_path, seed, out)
        op, handles = build_handles(cfg)
        ens = Ensemble(op, handles)
        train_ds = _load_or_generate(cfg, "train", 0)
        val_ds = _load_or_generate(cfg, "val", 1)
        out_dir = Path(cfg.out_dir)
        tc = replace(cfg.training, seed=cfg.seed)
        model, history = train_router(
            ens, train_ds, val_ds, tc, cfg.T,
            log_path=out_dir / "router_training.csv",
        )
        ckpt = out_dir / "router.grck"
        checkpoint_save(model, ckpt)
        best = min(h.val_loss for h in history)
        click.echo(f"saved router to {ckpt} (best val loss {best:.6e})")
    except GreedyRouteError as exc:
        _fail(ctx, exc, EXIT_CONFIG)


def _replay_error_fields(ens, f, chosen):
    """Reconstruct per-iteration error fields from the recorded choices."""
    op = ens.op
    u_ref = reference_solution(op, f)
    u = Field.zeros(op.grid)
    fields = []

    def err_field(u_now):
        e = u_ref.values - u_now.values
        if op.is_singular():
            e = e - e.mean()
        return Field(op.grid, e)

    fields.append(err_field(u))
    for sid in chosen:
        corr = apply_solver(ens.handle(sid), op, residual(op, u, f))
        u = Field(op.grid, u.values + corr.values)
        fields.append(err_field(u))
    return fields


def _write_run_outputs(cfg, ens, trace, out_dir, f, diverged):
    trace.to_csv(out_dir / "trace.csv")
    summary = {
        "policy": cfg.policy.type,
        "T": trace.steps,
        "diverged": diverged,
        "initial_error": trace.error_norms[0],
        "initial_residual": trace.residual_norms[0],
        "final_error": trace.error_norms[-1],
        "final_residual": trace.residual_norms[-1],
        "error_auc": trace.error_auc(),
        "residual_auc_sq": float(
            sum(r * r for r in trace.residual_norms[1:])
        ),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    curves = {}
    if cfg.metrics.error_auc:
        curves["error"] = trace.error_norms
    if cfg.metrics.residual_auc:
        curves["residual"] = trace.residual_norms
    if curves:
        plot_convergence(curves, out_dir / "convergence.png")
    labels = [h.label or str(h.id) for h in ens.handles]
    plot_solver_choices(trace.chosen, labels, out_dir / "choices.png")
    if cfg.metrics.modes and cfg.dim == 1 and not diverged:
        fields = _replay_error_fields(ens, f, trace.chosen)
        hist = mode_error_history(fields, cfg.metrics.modes)
        with open(out_dir / "modes.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            keys = sorted(hist)
            writer.writerow(["step"] + [f"mode_{m}" for m in keys])
            for t in range(len(fields)):
                writer.writerow([t] + [repr(hist[m][t]) for m in keys])
        plot_mode_history(hist, out_dir / "modes.png")


@main.command("run")
@_common
@click.pass_context
def cmd_run(ctx, config_path, seed, out):
    """Run one hybrid trajectory and write its trace, summary, and figures."""
    try:
        cfg = _load_config(config_path, seed, out)
        if cfg.policy is None:
            raise ConfigParse("run needs a 'policy' block")
        op, handles = build_handles(cfg)
        ens = Ensemble(op, handles)
        policy = _build_policy(cfg.policy, ens)
        test_path = _dataset_path(cfg, "test")
        if test_path.exists():
            f, _ = load_dataset(test_path).pair(0)
        else:
            f, _ = generate_dataset(cfg.grid, 1, op.kind, shift=op.shift,
                                    seed=cfg.seed + 2).pair(0)
        out_dir = Path(cfg.out_dir)
        try:
            trace = run_hybrid(ens, policy, f, cfg.T)
        except DivergedIterate as exc:
            _write_run_outputs(cfg, ens, exc.trace, out_dir, f, diverged=True)
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_DIVERGED)
        _write_run_outputs(cfg, ens, trace, out_dir, f, diverged=False)
        click.echo(f"final error {trace.error_norms[-1]:.6e}, "
                   f"trace in {out_dir / 'trace.csv'}")
    except GreedyRouteError as exc:
        _fail(ctx, exc, EXIT_CONFIG)


def _render_table(rows) -> str:
    """Fixed-width table with values scaled by 1e3 (reported as x 1e-3)."""
    lines = [
        f"{'policy':<24}{'final err (x1e-3)':>20}{'+/- se':>12}"
        f"{'error AUC (x1e-3)':>20}{'+/- se':>12}",
    ]
    for name, fe, fe_se, auc, auc_se in rows:
        lines.append(
            f"{name:<24}{fe * 1e3:>20.4f}{fe_se * 1e3:>12.4f}"
            f"{auc * 1e3:>20.4f}{auc_se * 1e3:>12.4f}"
        )
    return "\n".join(lines) + "\n"


@main.command("compare")
@_common
@click.pass_context
def cmd_compare(ctx, config_path, seed, out):
    """Evaluate several policies on one test set; emit tables and figures."""
    try:
        cfg = _load_config(config_path, seed, out)
        if not cfg.compare:
            raise ConfigParse("compare needs a 'compare.policies' list")
        op, handles = build_handles(cfg)
        ens = Ensemble(op, handles)
        test_ds = _load_or_generate(cfg, "test", 2)
        out_dir = Path(cfg.out_dir)
        table_rows, curves, names, means, sems = [], {}, [], [], []
        for spec in cfg.compare:
            name = _policy_name(spec)
            policy = _build_policy(spec, ens)
            try:
                summary = evaluate(ens, policy, test_ds, cfg.T,
                                   keep_traces=True)
            except DivergedIterate as exc:
                click.echo(f"error: policy {name} diverged: {exc}", err=True)
                ctx.exit(EXIT_DIVERGED)
            safe = name.replace(" ", "_").replace("/", "_")
            with open(out_dir / f"compare_{safe}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["instance", "final_error", "error_auc",
                                 "final_residual", "residual_auc_sq"])
                for i, m in enumerate(summary.instances):
                    writer.writerow([i, repr(m.final_error),
                                     repr(m.error_auc),
                                     repr(m.final_residual),
                                     repr(m.residual_auc_sq)])
            fe, fe_se = summary.mean_final_error
            auc, auc_se = summary.mean_error_auc
            table_rows.append((name, fe, fe_se, auc, auc_se))
            stacked = np.stack([m.trace.error_norms
                                for m in summary.instances])
            curves[name] = stacked.mean(axis=0)
            names.append(name)
            means.append(fe)
            sems.append(fe_se)
        with open(out_dir / "compare_table.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["policy", "mean_final_error", "sem_final_error",
                             "mean_error_auc", "sem_error_auc"])
            for row in table_rows:
                writer.writerow([row[0]] + [repr(v) for v in row[1:]])
        rendered = _render_table(table_rows)
        (out_dir / "compare_table.txt").write_text(rendered)
        plot_convergence(curves, out_dir / "compare_convergence.png",
                         ylabel="mean error norm")
        plot_policy_bars(names, means, sems, out_dir / "compare_bars.png")
        click.echo(rendered, nl=False)
    except GreedyRouteError as exc:
        _fail(ctx, exc, EXIT_CONFIG)


def _theory_checks(cfg: ExperimentConfig):
    from .grid import GridSpec
    from .operators import EquationKind, build_operator

    th = cfg.theory
    grid = GridSpec(1, th.n)
    op = build_operator(grid, EquationKind.POISSON, 0.0)
    handles = [jacobi_handle(i + 1, omega=w, label=f"jacobi({w})")
               for i, w in enumerate(th.omegas)]
    ens = Ensemble(op, handles)
    rng = np.random.Generator(np.random.Philox(key=[cfg.seed, 97]))

    def rand_e0():
        v = rng.standard_normal(grid.npoints)
        return Field(grid, v - v.mean())

    checks = []

    worst = np.inf
    bad = 0
    for _ in range(th.trials):
        rep = theorem1_check(ens, rand_e0(), th.T)
        worst = min(worst, rep.slack)
        bad += 0 if rep.satisfied else 1
    checks.append({"name": "greedy_suboptimality_bound", "trials": th.trials,
                   "violations": bad, "worst_slack": worst})

    sup = supermodularity_check(ens, rand_e0(), th.T)
    checks.append({"name": "supermodularity_prefix", "trials": sup.trials,
                   "violations": sup.violations,
                   "worst_slack": sup.worst_slack})
    checks.append({"name": "weak_supermodularity_alpha1",
                   "trials": sup.weak_alpha1_trials,
                   "violations": sup.weak_alpha1_violations,
                   "worst_slack": sup.worst_slack})

    worst = np.inf
    bad = 0
    for _ in range(th.trials):
        e0 = rand_e0()
        seq = [int(x) for x in
               rng.integers(1, ens.size + 1, size=th.T)]
        diff = abs(sequence_value(ens, seq, e0) - spectral_value(ens, seq, e0))
        margin = 1e-9 - diff
        worst = min(worst, margin)
        bad += 1 if margin < 0 else 0
    checks.append({"name": "shared_eigenbasis_identity", "trials": th.trials,
                   "violations": bad, "worst_slack": worst})

    from .routing import routing_loss, surrogate_loss
    from .theory import lemma_c1_identity

    worst = np.inf
    bad = c1_bad = 0
    for _ in range(th.trials):
        k = int(rng.integers(2, 6))
        costs = rng.random(k)
        logits = rng.standard_normal(k)
        chosen = int(np.argmax(logits)) + 1
        margin = (surrogate_loss(costs, logits)
                  - np.log(2.0) * routing_loss(costs, chosen))
        worst = min(worst, margin)
        bad += 1 if margin < -1e-10 else 0
        c1_bad += 0 if lemma_c1_identity(costs, chosen) else 1
    checks.append({"name": "surrogate_upper_bound", "trials": th.trials,
                   "violations": bad, "worst_slack": worst})
    checks.append({"name": "complement_rewriting_identity",
                   "trials": th.trials, "violations": c1_bad,
                   "worst_slack": 0.0})

    greedy_seq, _ = greedy_sequence(ens, rand_e0(), th.T)
    checks.append({"name": "greedy_sequence_length", "trials": 1,
                   "violations": 0 if len(greedy_seq) == th.T else 1,
                   "worst_slack": 0.0})
    return checks


@main.command("verify-theory")
@_common
@click.pass_context
def cmd_verify_theory(ctx, config_path, seed, out):
    """Numerically check the suboptimality and surrogate-loss results."""
    try:
        cfg = _load_config(config_path, seed, out)
        checks = _theory_checks(cfg)
        report_path = Path(cfg.out_dir) / "theory_report.json"
        report_path.write_text(json.dumps(checks, indent=2) + "\n")
        total_bad = sum(c["violations"] for c in checks)
        for c in checks:
            click.echo(f"{c['name']}: trials={c['trials']} "
                       f"violations={c['violations']} "
                       f"worst_slack={c['worst_slack']:.3e}")
        click.echo(f"report written to {report_path}")
        if total_bad:
            click.echo(f"error: {total_bad} violation(s) found", err=True)
            ctx.exit(1)
    except GreedyRouteError as exc:
        _fail(ctx, exc, EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
