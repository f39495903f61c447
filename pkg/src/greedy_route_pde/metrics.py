"""Error and residual metrics for hybrid runs.

Mode-wise error magnitudes combine each Fourier frequency with its conjugate
partner so that real fields get one nonnegative amplitude per physical mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .errors import BadMode
from .grid import Field, check_same_grid
from .operators import dft
from .routing import RouteTrace


def mode_error(e: Field, modes: Sequence[int]) -> Dict[int, float]:
    """Magnitude of selected 1D Fourier modes of the error field.

    For mode k > 0 the magnitude combines the +k and -k coefficients in
    quadrature, so a pure real sinusoid of amplitude a reports a / sqrt(2)
    under the unitary transform regardless of phase.
    """
    if e.grid.dim != 1:
        raise BadMode("mode_error expects a 1D field")
    coeffs = dft(e).ravel()
    n = e.grid.n
    out = {}
    for k in modes:
        k = int(k)
        if not 0 <= k < n / 2:
            raise BadMode(f"mode {k} outside 0 <= m < n/2 = {n / 2}")
        if k == 0:
            out[k] = float(np.abs(coeffs[k]))
        else:
            out[k] = float(np.hypot(np.abs(coeffs[k]), np.abs(coeffs[n - k])))
    return out


def mode_error_history(errors: List[Field], modes: Sequence[int]) -> Dict[int, np.ndarray]:
    """Per-iteration magnitude history for each requested mode."""
    per_mode: Dict[int, list] = {}
    for e in errors:
        snap = mode_error(e, modes)
        for k, v in snap.items():
            per_mode.setdefault(k, []).append(v)
    return {k: np.array(v) for k, v in per_mode.items()}


@dataclass
class ResidualMetrics:
    final_norm: float
    auc_squared: float


def residual_metrics(trace: RouteTrace) -> ResidualMetrics:
    """Final residual norm and the sum of squared norms over steps 1..T."""
    return ResidualMetrics(
        final_norm=trace.residual_norms[-1],
        auc_squared=float(sum(r * r for r in trace.residual_norms[1:])),
    )


def error_field(u: Field, u_ref: Field, zero_mean: bool = False) -> Field:
    """Reference minus iterate, optionally projected to the zero-mean subspace."""
    check_same_grid(u.grid, u_ref.grid)
    e = u_ref.values - u.values
    if zero_mean:
        e = e - e.mean()
    return Field(u.grid, e)
