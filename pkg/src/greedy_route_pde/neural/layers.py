"""Dense networks built on the autodiff engine.

``DeepOnetModel`` is the branch/trunk surrogate: the branch encodes the input
field, the trunk encodes grid coordinates, and the output field is their inner
product per grid point. The branch carries no bias terms so a zero input field
maps to a zero output field exactly. ``LstmRouter`` scores the solvers in an
ensemble from a per-step feature vector, with recurrent state carried across
iterations.
"""

from __future__ import annotations

import numpy as np

from ..errors import GridMismatch, ShapeMismatch
from ..grid import Field, GridSpec
from .autodiff import Tensor, parameter


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    scale = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-scale, scale, size=(fan_in, fan_out))


class Mlp:
    """Fully connected net; tanh hidden activations, linear output."""

    def __init__(self, sizes, rng: np.random.Generator, bias=True,
                 activation="tanh", prefix="mlp"):
        self.sizes = list(sizes)
        self.bias = bias
        self.activation = activation
        self.weights = []
        self.biases = []
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.weights.append(parameter(_glorot(rng, fi, fo),
                                          name=f"{prefix}.w{i}"))
            if bias:
                self.biases.append(parameter(np.zeros(fo),
                                             name=f"{prefix}.b{i}"))

    def parameters(self):
        return list(self.weights) + list(self.biases)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.sizes[0]:
            raise ShapeMismatch(
                f"expected input width {self.sizes[0]}, got {x.shape[-1]}"
            )
        h = x
        last = len(self.weights) - 1
        for i, w in enumerate(self.weights):
            h = h @ w
            if self.bias:
                h = h + self.biases[i]
            if i < last:
                h = h.tanh() if self.activation == "tanh" else h.relu()
        return h


class DeepOnetModel:
    """Branch/trunk surrogate mapping a field to a field on a fixed grid."""

    def __init__(self, grid: GridSpec, rng: np.random.Generator,
                 hidden: int = 128, depth: int = 2, p: int = 64,
                 activation: str = "tanh"):
        self.grid = grid
        self.p = p
        self.hidden = hidden
        self.depth = depth
        self.activation = activation
        npts = grid.npoints
        branch_sizes = [npts] + [hidden] * depth + [p]
        trunk_sizes = [grid.dim] + [hidden] * depth + [p]
        # bias-free branch keeps the surrogate zero-preserving
        self.branch = Mlp(branch_sizes, rng, bias=False,
                          activation=activation, prefix="branch")
        self.trunk = Mlp(trunk_sizes, rng, bias=True,
                         activation=activation, prefix="trunk")
        self._trunk_cache = None

    def parameters(self):
        return self.branch.parameters() + self.trunk.parameters()

    def invalidate_cache(self):
        self._trunk_cache = None

    def trunk_output(self) -> Tensor:
        """Trunk evaluated at all grid coordinates, shape (N, p)."""
        coords = Tensor(self.grid.coords())
        return self.trunk.forward(coords)

    def forward(self, fields: Tensor) -> Tensor:
        """Batched forward: (B, N) input fields -> (B, N) output fields."""
        b = self.branch.forward(fields)  # (B, p)
        t = self.trunk_output()  # (N, p)
        return b @ _transpose(t)

    def predict(self, f: Field) -> Field:
        """Inference on one field, no graph; trunk output cached per params."""
        if f.grid != self.grid:
            raise GridMismatch(f"model grid {self.grid}, field grid {f.grid}")
        if self._trunk_cache is None:
            self._trunk_cache = self.trunk_output().data
        b = _mlp_infer(self.branch, f.values[None, :])
        return Field(self.grid, (b @ self._trunk_cache.T).ravel())


def _transpose(t: Tensor) -> Tensor:
    out = Tensor(t.data.T, parents=(t,))

    def bw(g):
        if t.requires_grad:
            t._accumulate(g.T)

    out._backward = bw
    return out


def _mlp_infer(mlp: Mlp, x: np.ndarray) -> np.ndarray:
    h = x
    last = len(mlp.weights) - 1
    for i, w in enumerate(mlp.weights):
        h = h @ w.data
        if mlp.bias:
            h = h + mlp.biases[i].data
        if i < last:
            h = np.tanh(h) if mlp.activation == "tanh" else np.maximum(h, 0.0)
    return h


class LstmRouter:
    """Input encoder + stacked LSTM + linear head producing solver logits."""

    def __init__(self, input_dim: int, num_solvers: int,
                 rng: np.random.Generator, hidden: int = 64, layers: int = 3,
                 encoder_dim: int = 64):
        self.input_dim = input_dim
        self.num_solvers = num_solvers
        self.hidden = hidden
        self.layers = layers
        self.encoder_dim = encoder_dim
        self.enc_w = parameter(_glorot(rng, input_dim, encoder_dim), name="enc.w")
        self.enc_b = parameter(np.zeros(encoder_dim), name="enc.b")
        self.cells = []
        in_dim = encoder_dim
        for layer in range(layers):
            wx = parameter(_glorot(rng, in_dim, 4 * hidden),
                           name=f"lstm{layer}.wx")
            wh = parameter(_glorot(rng, hidden, 4 * hidden),
                           name=f"lstm{layer}.wh")
            b = parameter(np.zeros(4 * hidden), name=f"lstm{layer}.b")
            self.cells.append((wx, wh, b))
            in_dim = hidden
        self.head_w = parameter(_glorot(rng, hidden, num_solvers), name="head.w")
        self.head_b = parameter(np.zeros(num_solvers), name="head.b")

    def parameters(self):
        params = [self.enc_w, self.enc_b]
        for wx, wh, b in self.cells:
            params.extend([wx, wh, b])
        params.extend([self.head_w, self.head_b])
        return params

    def init_state(self):
        """Zero (h, c) pairs for every layer as constant tensors."""
        return [
            (Tensor(np.zeros((1, self.hidden))), Tensor(np.zeros((1, self.hidden))))
            for _ in range(self.layers)
        ]

    def detach_state(self, state):
        return [(h.detach(), c.detach()) for h, c in state]

    def step(self, x: Tensor, state):
        """One time step: features (1, input_dim) -> (logits (K,), state')."""
        if x.shape != (1, self.input_dim):
            raise ShapeMismatch(
                f"expected features (1, {self.input_dim}), got {x.shape}"
            )
        h = (x @ self.enc_w + self.enc_b).tanh()
        new_state = []
        hd = self.hidden
        for (wx, wh, b), (h_prev, c_prev) in zip(self.cells, state):
            gates = (h @ wx) + (h_prev @ wh) + b
            i = gates.cols(0, hd).sigmoid()
            f = gates.cols(hd, 2 * hd).sigmoid()
            g = gates.cols(2 * hd, 3 * hd).tanh()
            o = gates.cols(3 * hd, 4 * hd).sigmoid()
            c = f * c_prev + i * g
            h = o * c.tanh()
            new_state.append((h, c))
        logits = h @ self.head_w + self.head_b  # (1, K)
        return logits, new_state
