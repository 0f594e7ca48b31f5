"""Nonselective evolution: the double-commutator master equation and readout averages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    MeasurementSpec,
    NumericalError,
    as_density_matrix,
    as_operator,
    as_state,
)

TRACE_DRIFT_LIMIT = 1e-6


def lindblad_rhs(rho, H, A, kappa: float) -> np.ndarray:
    """``-i[H, rho] - (kappa/2)[A, [A, rho]]``."""
    h = as_operator(H).entries
    a = as_operator(A).entries
    r = np.asarray(rho, dtype=complex)
    if not (h.shape == a.shape == r.shape):
        raise ValueError(
            f"dimension mismatch: H {h.shape}, A {a.shape}, rho {r.shape}"
        )
    ar = a @ r - r @ a
    return -1j * (h @ r - r @ h) - 0.5 * kappa * (a @ ar - ar @ a)


class _Generator:
    """Master-equation right-hand side with operators bound once."""

    def __init__(self, H, A, kappa):
        self.h = as_operator(H, hermitian=True).entries
        self.a = as_operator(A, hermitian=True).entries
        self.a2 = self.a @ self.a
        self.half_kappa = 0.5 * kappa

    def __call__(self, r):
        h, a = self.h, self.a
        # [A,[A,r]] = A^2 r - 2 A r A + r A^2
        double = self.a2 @ r - 2.0 * (a @ r @ a) + r @ self.a2
        return -1j * (h @ r - r @ h) - self.half_kappa * double


def master_series(rho0, spec: MeasurementSpec, H, every: int = 1):
    """Integrate the master equation with fixed-step RK4 on ``spec.grid``.

    Returns ``(times, states)`` sampled every ``every`` steps, always including
    ``t = 0`` and ``t = T``.

    Raises
    ------
    NumericalError
        On trace drift above 1e-6, purity above 1 + 1e-6 (RK4 keeps the trace
        even while blowing up) or non-finite entries; the message suggests a
        step size.
    """
    rho = as_density_matrix(rho0, dim=spec.dim).copy()
    f = _Generator(H, spec.observable, spec.kappa)
    dt = spec.grid.dt
    n = spec.grid.steps
    times, states = [0.0], [rho.copy()]
    for k in range(1, n + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        drift = abs(np.trace(rho).real - 1.0)
        excess = float(np.sum(np.abs(rho) ** 2)) - 1.0
        if not np.all(np.isfinite(rho)) or drift > TRACE_DRIFT_LIMIT or excess > TRACE_DRIFT_LIMIT:
            raise NumericalError(
                f"master equation unstable at step {k} (trace drift {drift:.3g}, "
                f"purity excess {excess:.3g}); "
                f"try dt <= {_suggest_dt(f, dt):.3g}"
            )
        if k % every == 0 or k == n:
            times.append(k * dt)
            states.append(rho.copy())
    return np.array(times), np.array(states)


def _suggest_dt(f: _Generator, dt: float) -> float:
    # RK4 stability on the imaginary axis reaches ~2.8; aim well inside it
    lam = np.linalg.eigvalsh(f.a)
    w = np.linalg.eigvalsh(f.h)
    rate = f.half_kappa * (lam[-1] - lam[0]) ** 2 + (w[-1] - w[0])
    return min(dt / 2, 1.0 / rate) if rate > 0 else dt / 2


def propagate_master(rho0, spec: MeasurementSpec, H) -> np.ndarray:
    """Density matrix at ``T`` under the master equation (RK4 on ``spec.grid``)."""
    _, states = master_series(rho0, spec, H, every=spec.grid.steps)
    return states[-1]


@dataclass(frozen=True)
class EnsembleEstimate:
    """Readout-averaged density matrix with per-entry Monte Carlo standard errors."""

    rho: np.ndarray
    stderr: np.ndarray
    n: int

    def trace_distance_error(self) -> float:
        """Scale of the statistical trace-distance error of :attr:`rho`.

        Uses ``||X||_1 <= sqrt(d) ||X||_F`` on the Frobenius norm of the
        per-entry standard errors.
        """
        d = self.rho.shape[0]
        return 0.5 * float(np.sqrt(d) * np.sqrt(np.sum(self.stderr**2)))


def ensemble_average(trajectories: Iterable) -> EnsembleEstimate:
    """Weighted average of normalized conditioned states.

    ``trajectories`` yields either ``(psi, weight)`` pairs or objects with
    ``final_state`` and ``log_weight`` attributes (see
    :class:`rpi_sim.sampler.Trajectory`). Each state is normalized before
    averaging, so readouts drawn from their exact distribution enter with
    weight 1.
    """
    states, weights = [], []
    for item in trajectories:
        if hasattr(item, "final_state"):
            psi, w = item.final_state, float(np.exp(item.log_weight))
        else:
            psi, w = item
        states.append(as_state(psi))
        weights.append(float(w))
    if not states:
        raise ValueError("ensemble_average needs at least one trajectory")
    psi = np.array(states)
    norms = np.linalg.norm(psi, axis=1)
    if np.any(norms == 0):
        raise ValueError("trajectory with zero norm")
    psi = psi / norms[:, None]
    w = np.array(weights)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    w = w / w.sum()
    proj = psi[:, :, None] * psi[:, None, :].conj()
    rho = np.einsum("i,ijk->jk", w, proj)
    rho = 0.5 * (rho + rho.conj().T)
    dev = proj - rho[None]
    stderr = np.sqrt(np.einsum("i,ijk->jk", w**2, np.abs(dev) ** 2))
    return EnsembleEstimate(rho, stderr, len(states))
