"""Shared helpers: numeric differentiation and small problem builders."""

import numpy as np
import pytest

from greedy_route_pde.grid import Field, GridSpec
from greedy_route_pde.operators import EquationKind, build_operator, operator_dense


def numeric_grad(fn, arr, eps=1e-6, coords=None):
    """Central-difference gradient of scalar fn with respect to arr entries.

    coords limits the check to a subset of flat indices (full array when None).
    """
    flat = arr.ravel()
    coords = list(range(flat.size)) if coords is None else list(coords)
    grad = np.zeros(len(coords))
    for pos, i in enumerate(coords):
        old = flat[i]
        flat[i] = old + eps
        up = fn()
        flat[i] = old - eps
        down = fn()
        flat[i] = old
        grad[pos] = (up - down) / (2 * eps)
    return grad


def rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / denom


@pytest.fixture
def grid8():
    return GridSpec(1, 8)


@pytest.fixture
def poisson8(grid8):
    return build_operator(grid8, EquationKind.POISSON, 0.0)


@pytest.fixture
def dense8(poisson8):
    return operator_dense(poisson8)


def zero_mean_field(grid, rng):
    v = rng.standard_normal(grid.npoints)
    return Field(grid, v - v.mean())
