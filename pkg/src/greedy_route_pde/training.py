"""Offline training pipelines for the surrogate and the router.

The surrogate is plain regression from forcing to solution. The router is
trained to imitate the greedy rule: rollouts are driven by greedy labels
(teacher forcing, annealed to the router's own iterates by scheduled
sampling), the per-step loss is the cost-weighted cross-entropy surrogate, and
gradients flow through at most the most recent TBPTT-window steps of the
recurrent state.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import List, Optional

import numpy as np

from .errors import EmptyDataset, MissingSurrogate
from .grf import Dataset
from .grid import Field
from .neural.autodiff import Tensor
from .neural.layers import DeepOnetModel, LstmRouter
from .neural.optim import Adam, clip_global_norm
from .operators import reference_solution, residual
from .routing import (
    Ensemble,
    RouteTrace,
    greedy_select,
    router_features,
    run_hybrid,
    step_costs,
    surrogate_loss,
    surrogate_loss_node,
)
from .solvers import NEURAL, apply_solver


@dataclass
class TrainConfig:
    """Optimization and schedule hyperparameters."""

    lr: float = 1e-3
    weight_decay: float = 0.005
    clip_norm: float = 1.0
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    # scheduled sampling
    ss_start: float = 1.0
    gamma_tf: float = 0.95
    ss_end: float = 0.0
    e_w: int = 10
    # truncated backprop through time
    w_start: int = 30
    gamma_bptt: float = 1.25
    f_bptt: int = 4
    t_max: int = 300

    def __post_init__(self):
        if not (0.0 <= self.ss_end <= self.ss_start <= 1.0):
            raise ValueError("need 0 <= ss_end <= ss_start <= 1")
        if not (0.0 < self.gamma_tf < 1.0):
            raise ValueError("need 0 < gamma_tf < 1")
        if self.gamma_bptt <= 1.0:
            raise ValueError("need gamma_bptt > 1")
        if self.w_start < 1:
            raise ValueError("need w_start >= 1")


def teacher_prob(cfg: TrainConfig, epoch: int) -> float:
    """Teacher-forcing probability: flat warm-up, then geometric decay."""
    if epoch <= cfg.e_w:
        return cfg.ss_start
    return max(cfg.ss_start * cfg.gamma_tf ** (epoch - cfg.e_w), cfg.ss_end)


def bptt_window(cfg: TrainConfig, epoch: int) -> int:
    """Backprop window: flat warm-up, then capped geometric growth."""
    if epoch <= cfg.e_w:
        return cfg.w_start
    steps = (epoch - cfg.e_w) // cfg.f_bptt
    return min(cfg.t_max, int(cfg.w_start * cfg.gamma_bptt**steps))


def _keyed_rng(seed: int, *indices: int) -> np.random.Generator:
    key = np.array([np.uint64(seed), np.uint64(sum(
        (i + 1) * 1_000_003**pos for pos, i in enumerate(indices)
    ) % 2**64)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    p_tf: float = float("nan")
    w_bptt: int = 0


def write_training_log(history: List[EpochLog], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "p_tf", "w_bptt"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss),
                             repr(row.val_loss), repr(row.p_tf), row.w_bptt])


# -- surrogate training -----------------------------------------------------


def train_deeponet(
    train_ds: Dataset,
    val_ds: Dataset,
    cfg: TrainConfig,
    model: Optional[DeepOnetModel] = None,
    log_path=None,
):
    """Minimize mean squared grid error; keep the best-validation parameters."""
    if train_ds.count == 0 or val_ds.count == 0:
        raise EmptyDataset("surrogate training needs nonempty train/val sets")
    rng = _keyed_rng(cfg.seed, 0)
    if model is None:
        model = DeepOnetModel(train_ds.grid, rng)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_val, best_params = np.inf, None
    history = []
    for epoch in range(cfg.epochs):
        order = _keyed_rng(cfg.seed, 1, epoch).permutation(train_ds.count)
        epoch_losses = []
        for start in range(0, train_ds.count, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            model.invalidate_cache()
            opt.zero_grad()
            pred = model.forward(Tensor(train_ds.forcings[idx]))
            diff = pred - Tensor(train_ds.solutions[idx])
            loss = (diff * diff).mean()
            loss.backward()
            clip_global_norm(params, cfg.clip_norm)
            opt.step()
            epoch_losses.append(float(loss.data))
        model.invalidate_cache()
        val_pred = model.forward(Tensor(val_ds.forcings)).data
        val_loss = float(np.mean((val_pred - val_ds.solutions) ** 2))
        history.append(EpochLog(epoch, float(np.mean(epoch_losses)), val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.data.copy() for p in params]
    if best_params is not None:
        for p, data in zip(params, best_params):
            p.data = data
    model.invalidate_cache()
    if log_path is not None:
        write_training_log(history, log_path)
    return model, history


# -- teacher-forced rollouts ------------------------------------------------


@dataclass
class TeacherRollout:
    """Greedy-labelled trajectory used as router training data."""

    forcing: Field
    iterates: List[Field]  # u^(0..T)
    features: List[np.ndarray]  # router input at each step, len T
    costs: List[np.ndarray]  # per-solver lookahead costs at each step, len T
    labels: List[int]  # greedy choices, len T


def rollout_teacher_forced(ens: Ensemble, f: Field, T: int) -> TeacherRollout:
    """Advance iterates with the greedy label at every step."""
    op = ens.op
    u_ref = reference_solution(op, f)
    u = Field.zeros(op.grid)
    iterates, features, costs_list, labels = [u], [], [], []
    for _ in range(T):
        r = residual(op, u, f)
        e = Field(op.grid, u_ref.values - u.values)
        costs = step_costs(ens, e)
        label = greedy_select(costs)
        features.append(router_features(r, f))
        costs_list.append(costs)
        labels.append(label)
        corr = apply_solver(ens.handle(label), op, r)
        u = Field(op.grid, u.values + corr.values)
        iterates.append(u)
    return TeacherRollout(forcing=f, iterates=iterates, features=features,
                          costs=costs_list, labels=labels)


# -- router training --------------------------------------------------------


def _check_surrogates(ens: Ensemble) -> None:
    for handle in ens.handles:
        if handle.kind == NEURAL and handle.model is None:
            raise MissingSurrogate(
                f"ensemble solver {handle.id} has no surrogate model"
            )


def _rollout_loss(
    model: LstmRouter,
    ens: Ensemble,
    rollout: TeacherRollout,
    T: int,
    p_tf: float,
    window: int,
    coin_rng: np.random.Generator,
    grad_scale: Optional[float],
) -> float:
    """Scheduled-sampling rollout; backprop per TBPTT segment when training.

    Returns the mean per-step surrogate loss. When ``grad_scale`` is None the
    rollout is evaluation-only and no graph is kept.
    """
    op = ens.op
    f = rollout.forcing
    u_ref = reference_solution(op, f)
    state = model.init_state()
    u_cur = rollout.iterates[0]
    total = 0.0
    chunk = []
    for t in range(T):
        use_teacher = bool(coin_rng.random() < p_tf)
        if use_teacher:
            u_fed = rollout.iterates[t]
            feats = rollout.features[t]
            costs = rollout.costs[t]
        else:
            u_fed = u_cur
            r_fed = residual(op, u_fed, f)
            feats = router_features(r_fed, f)
            e = Field(op.grid, u_ref.values - u_fed.values)
            costs = step_costs(ens, e)
        logits, state = model.step(Tensor(feats.reshape(1, -1)), state)
        # normalize the lookahead costs per step: the cost-weight vector keeps
        # its direction (same per-step minimizer) but every step contributes
        # at unit scale, instead of the raw squared-error scale that shrinks
        # by orders of magnitude along the trajectory and starves the
        # optimizer of gradient signal
        scale = float(np.sum(costs))
        costs_n = costs / scale if scale > 0.0 else costs
        total += surrogate_loss(costs_n, logits.data.ravel())
        if grad_scale is not None:
            chunk.append(surrogate_loss_node(costs_n, logits))
            if len(chunk) >= window or t == T - 1:
                seg = chunk[0]
                for node in chunk[1:]:
                    seg = seg + node
                seg.backward(np.array(grad_scale / T))
                state = model.detach_state(state)
                chunk = []
        else:
            state = model.detach_state(state)
        chosen = int(np.argmax(logits.data.ravel())) + 1
        r_step = residual(op, u_fed, f)
        corr = apply_solver(ens.handle(chosen), op, r_step)
        u_cur = Field(op.grid, u_fed.values + corr.values)
    return total / max(T, 1)


def train_router(
    ens: Ensemble,
    train_ds: Dataset,
    val_ds: Dataset,
    cfg: TrainConfig,
    T: int,
    model: Optional[LstmRouter] = None,
    log_path=None,
):
    """Scheduled-sampling + TBPTT training against greedy labels."""
    _check_surrogates(ens)
    if train_ds.count == 0 or val_ds.count == 0:
        raise EmptyDataset("router training needs nonempty train/val sets")
    npts = ens.op.grid.npoints
    if model is None:
        model = LstmRouter(2 * npts, ens.size, _keyed_rng(cfg.seed, 2))
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    train_rollouts = [
        rollout_teacher_forced(ens, train_ds.pair(i)[0], T)
        for i in range(train_ds.count)
    ]
    val_rollouts = [
        rollout_teacher_forced(ens, val_ds.pair(i)[0], T)
        for i in range(val_ds.count)
    ]
    best_val, best_params = np.inf, None
    history = []
    for epoch in range(cfg.epochs):
        p_tf = teacher_prob(cfg, epoch)
        window = bptt_window(cfg, epoch)
        order = _keyed_rng(cfg.seed, 3, epoch).permutation(train_ds.count)
        epoch_losses = []
        for start in range(0, train_ds.count, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            opt.zero_grad()
            for idx in batch:
                loss = _rollout_loss(
                    model, ens, train_rollouts[idx], T, p_tf, window,
                    _keyed_rng(cfg.seed, 4, epoch, int(idx)),
                    grad_scale=1.0 / len(batch),
                )
                epoch_losses.append(loss)
            clip_global_norm(params, cfg.clip_norm)
            opt.step()
        # validation always runs free (no teacher forcing): the loss scale
        # depends on the visited states, so mixing in teacher steps would make
        # epochs incomparable and break best-checkpoint selection
        val_losses = [
            _rollout_loss(
                model, ens, val_rollouts[i], T, 0.0, window,
                _keyed_rng(cfg.seed, 5, epoch, i), grad_scale=None,
            )
            for i in range(val_ds.count)
        ]
        val_loss = float(np.mean(val_losses))
        history.append(EpochLog(epoch, float(np.mean(epoch_losses)), val_loss,
                                p_tf=p_tf, w_bptt=window))
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.data.copy() for p in params]
    if best_params is not None:
        for p, data in zip(params, best_params):
            p.data = data
    if log_path is not None:
        write_training_log(history, log_path)
    return model, history


# -- evaluation -------------------------------------------------------------


@dataclass
class InstanceMetrics:
    final_error: float
    error_auc: float
    final_residual: float
    residual_auc_sq: float
    trace: RouteTrace = dc_field(repr=False, default=None)


@dataclass
class EvalSummary:
    instances: List[InstanceMetrics]

    def _agg(self, attr):
        vals = np.array([getattr(m, attr) for m in self.instances])
        sem = vals.std(ddof=1) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return float(vals.mean()), float(sem)

    @property
    def mean_final_error(self):
        return self._agg("final_error")

    @property
    def mean_error_auc(self):
        return self._agg("error_auc")

    @property
    def mean_final_residual(self):
        return self._agg("final_residual")

    @property
    def mean_residual_auc_sq(self):
        return self._agg("residual_auc_sq")


def evaluate(ens: Ensemble, policy, dataset: Dataset, T: int,
             keep_traces: bool = False) -> EvalSummary:
    """Run the policy on every instance and aggregate error/residual metrics."""
    instances = []
    for i in range(dataset.count):
        f, _ = dataset.pair(i)
        trace = run_hybrid(ens, policy, f, T)
        residual_auc = float(sum(r * r for r in trace.residual_norms[1:]))
        instances.append(InstanceMetrics(
            final_error=trace.error_norms[-1],
            error_auc=trace.error_auc(),
            final_residual=trace.residual_norms[-1],
            residual_auc_sq=residual_auc,
            trace=trace if keep_traces else None,
        ))
    return EvalSummary(instances=instances)
