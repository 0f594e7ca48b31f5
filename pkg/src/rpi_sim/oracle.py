"""Brute-force restricted path sums over eigenbasis paths of the observable.

A path is a sequence of eigenbasis indices ``(n_0, n_1, ..., n_N)`` of ``A``.
Its amplitude is ``<n_0|psi_0> prod_k <n_{k+1}| exp(-i H dt) |n_k>`` and the
restricted sum weights each amplitude by ``w(path) in [0, 1]``:

    psi_T = sum_paths w(path) * amplitude(path) * |n_N>.

This module deliberately shares nothing with :mod:`rpi_sim.selective` beyond
the domain types: the hop matrix comes from ``scipy.linalg.expm`` and the sum
is an explicit enumeration.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np
import scipy.linalg

from .core import MeasurementSpec, Readout, as_operator, as_state

MAX_PATHS = 10**7
_CHUNK = 1 << 16

PathWeightFn = Callable[[np.ndarray, Readout], float]


class PathCountError(ValueError):
    """Raised when the path enumeration would exceed :data:`MAX_PATHS`."""


def weight_functional_gaussian(path_eigenvalues, readout: Readout, kappa: float,
                               dt: float) -> float:
    """``exp(-kappa dt sum_k (lambda_{n_k} - a_k)**2)``."""
    lam = np.asarray(path_eigenvalues, dtype=float)
    if lam.shape != readout.values.shape:
        raise ValueError(
            f"path has {lam.size} eigenvalues but the readout has {readout.values.size} steps"
        )
    return math.exp(-kappa * dt * float(np.sum((lam - readout.values) ** 2)))


class GaussianPathWeight:
    """Gaussian weight of an eigenbasis path, evaluated on ``n_1 ... n_N``.

    Slice ``k`` (from ``t_k`` to ``t_{k+1}``) is scored by the eigenvalue the
    path occupies at the end of the slice, so for ``N = 1`` the restricted
    sum is ``exp(-kappa dt (A - a_1)**2) exp(-i H dt) psi_0``.
    """

    def __init__(self, eigenvalues, kappa: float, dt: float):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.kappa = float(kappa)
        self.dt = float(dt)

    def __call__(self, path, readout: Readout) -> float:
        return weight_functional_gaussian(self.eigenvalues[np.asarray(path)[1:]], readout,
                                          self.kappa, self.dt)

    def batch(self, paths: np.ndarray, readout: Readout) -> np.ndarray:
        dev = self.eigenvalues[paths[:, 1:]] - readout.values[None, :]
        return np.exp(-self.kappa * self.dt * np.sum(dev**2, axis=1))


def unit_weight(path, readout: Readout) -> float:
    """The unrestricted weight: every path counts fully."""
    return 1.0


unit_weight.batch = lambda paths, readout: np.ones(paths.shape[0])  # type: ignore[attr-defined]


def gaussian_weight(spec: MeasurementSpec) -> GaussianPathWeight:
    return GaussianPathWeight(spec.observable.eigh[0], spec.kappa, spec.grid.dt)


def _paths(dim: int, length: int):
    """Lexicographic path chunks as integer arrays of shape ``(m, length)``."""
    it = itertools.product(range(dim), repeat=length)
    while True:
        block = list(itertools.islice(it, _CHUNK))
        if not block:
            return
        yield np.array(block, dtype=np.intp)


def brute_force_restricted_sum(psi0, readout: Readout, spec: MeasurementSpec, H,
                               weight: PathWeightFn | None = None,
                               check_weights: bool = False) -> np.ndarray:
    """Restricted path sum for ``psi0`` (returned in the computational basis).

    ``weight`` defaults to the Gaussian weight of ``spec``. Callables with a
    ``batch(paths, readout)`` attribute are evaluated a chunk at a time;
    otherwise the callable is invoked once per path.

    Raises
    ------
    PathCountError
        If ``dim**(N+1)`` exceeds ``MAX_PATHS``.
    """
    A = spec.observable
    H = as_operator(H, hermitian=True)
    dim, steps = A.dim, readout.grid.steps
    if readout.grid.steps != spec.grid.steps:
        raise ValueError("readout and measurement grids differ")
    count = dim ** (steps + 1)
    if count > MAX_PATHS:
        raise PathCountError(
            f"{count} paths ({dim}^{steps + 1}) exceeds the enumeration bound {MAX_PATHS}"
        )
    weight = gaussian_weight(spec) if weight is None else weight
    lam, v = np.linalg.eigh(A.entries)
    hop = v.conj().T @ scipy.linalg.expm(-1j * spec.grid.dt * H.entries) @ v
    start = v.conj().T @ as_state(psi0, dim)
    batched = getattr(weight, "batch", None)

    out = np.zeros(dim, dtype=complex)
    for paths in _paths(dim, steps + 1):
        amp = start[paths[:, 0]]
        for k in range(steps):
            amp = amp * hop[paths[:, k + 1], paths[:, k]]
        if batched is not None:
            w = np.asarray(batched(paths, readout), dtype=float)
        else:
            w = np.array([weight(p, readout) for p in paths], dtype=float)
        if check_weights and (np.any(w < 0) or np.any(w > 1)):
            raise ValueError("path weight outside [0, 1]")
        out += np.bincount(paths[:, -1], weights=(w * amp).real, minlength=dim)
        out += 1j * np.bincount(paths[:, -1], weights=(w * amp).imag, minlength=dim)
    return v @ out


def restricted_sum_probability(psi0, readout: Readout, spec: MeasurementSpec, H,
                               weight: PathWeightFn | None = None) -> float:
    """Squared norm of :func:`brute_force_restricted_sum`."""
    psi = brute_force_restricted_sum(psi0, readout, spec, H, weight)
    return float(np.vdot(psi, psi).real)
