"""Selective evolution: propagation conditioned on a known readout.

For a readout value ``a`` held over a step of length ``dt`` the effective
Hamiltonian is ``H - i*kappa*(A - a)**2``. One step is approximated by the
symmetric splitting

    M(a) = exp(-i H dt/2) exp(-kappa dt (A - a)**2) exp(-i H dt/2),

with both factors evaluated exactly in the eigenbases of ``H`` and ``A``.

Readout measure
---------------
Readout probabilities are densities with respect to the product measure
``prod_k sqrt(2 kappa dt / pi) da_k``. With this normalization
``integral M(a)^dagger M(a) = I`` holds exactly for one split step, whatever
``H`` is, so ``||psi_T||**2`` is a probability density over readouts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    EXP_RANGE_LIMIT,
    MeasurementSpec,
    Operator,
    RangeError,
    Readout,
    as_operator,
    as_state,
    matrix_exponential,
    norm_squared,
)


def readout_measure_factor(kappa: float, dt: float) -> float:
    """Per-step density of the readout measure, ``sqrt(2 kappa dt / pi)``."""
    return math.sqrt(2.0 * kappa * dt / math.pi)


def effective_hamiltonian(H, A, a: float, kappa: float) -> Operator:
    """``H - i kappa (A - a)**2`` as a (generally non-Hermitian) operator."""
    H = as_operator(H, hermitian=True)
    A = as_operator(A, hermitian=True)
    if H.dim != A.dim:
        raise ValueError(f"dimension mismatch: H is {H.dim}, A is {A.dim}")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    shifted = A.entries - a * np.eye(A.dim)
    return Operator(H.entries - 1j * kappa * (shifted @ shifted))


class StrangKraus:
    """Step operators ``M(a)`` for fixed ``H``, ``A``, ``kappa`` and ``dt``.

    Eigendecompositions are done once; each call costs two small matrix
    products. ``half_step_a`` is ``exp(-i H dt/2)`` written in ``A``'s
    eigenbasis, which is where the sampler and the damping factor work.
    """

    def __init__(self, H, A, kappa: float, dt: float):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if kappa < 0:
            raise ValueError("kappa must be >= 0")
        self.H = as_operator(H, hermitian=True)
        self.A = as_operator(A, hermitian=True)
        if self.H.dim != self.A.dim:
            raise ValueError(f"dimension mismatch: H is {self.H.dim}, A is {self.A.dim}")
        self.kappa = float(kappa)
        self.dt = float(dt)
        self.eigenvalues, self.basis = self.A.eigh
        self.half_step = matrix_exponential(self.H, -0.5j * self.dt).entries
        v = self.basis
        self.half_step_a = v.conj().T @ self.half_step @ v

    @property
    def dim(self) -> int:
        return self.A.dim

    def damping(self, a: float) -> np.ndarray:
        """Diagonal of ``exp(-kappa dt (A - a)**2)`` in ``A``'s eigenbasis."""
        expo = self.kappa * self.dt * (self.eigenvalues - a) ** 2
        worst = float(np.max(expo))
        if worst > EXP_RANGE_LIMIT:
            raise RangeError(
                f"kappa*dt*(lambda - a)^2 = {worst:.4g} exceeds {EXP_RANGE_LIMIT:g}; "
                f"readout value {a!r} is too far from the spectrum for this step"
            )
        return np.exp(-expo)

    def in_eigenbasis(self, a: float) -> np.ndarray:
        """``M(a)`` expressed in ``A``'s eigenbasis."""
        w = self.half_step_a
        return (w * self.damping(a)) @ w

    def __call__(self, a: float) -> np.ndarray:
        v = self.basis
        return v @ self.in_eigenbasis(a) @ v.conj().T


def step_kraus(H, A, a_k: float, kappa: float, dt: float) -> Operator:
    """Split-step solution operator of the conditioned equation over one step."""
    return Operator(StrangKraus(H, A, kappa, dt)(a_k))


def exact_step(H, A, a_k: float, kappa: float, dt: float) -> Operator:
    """Reference step ``exp(-i H_[a] dt)`` via the full matrix exponential."""
    return matrix_exponential(effective_hamiltonian(H, A, a_k, kappa), -1j * dt)


def _check_grid(readout: Readout, spec: MeasurementSpec) -> None:
    g, s = readout.grid, spec.grid
    if g.steps != s.steps or not math.isclose(g.duration, s.duration, rel_tol=1e-12):
        raise ValueError(
            f"readout grid (T={g.duration}, N={g.steps}) does not match "
            f"measurement grid (T={s.duration}, N={s.steps})"
        )


def propagate_selective(psi0, readout: Readout, spec: MeasurementSpec, H) -> np.ndarray:
    """Unnormalized conditioned state ``psi_T`` for the given readout.

    ``||psi_T||**2`` is the probability density of the readout; see
    :func:`readout_probability_density`.
    """
    _check_grid(readout, spec)
    kraus = StrangKraus(H, spec.observable, spec.kappa, spec.grid.dt)
    v = kraus.basis
    c = v.conj().T @ as_state(psi0, kraus.dim)
    for a in readout.values:
        c = kraus.in_eigenbasis(a) @ c
    return v @ c


def partial_propagator(readout: Readout, spec: MeasurementSpec, H) -> Operator:
    """Time-ordered product ``M(a_N) ... M(a_1)``."""
    _check_grid(readout, spec)
    kraus = StrangKraus(H, spec.observable, spec.kappa, spec.grid.dt)
    u = np.eye(kraus.dim, dtype=complex)
    for a in readout.values:
        u = kraus.in_eigenbasis(a) @ u
    v = kraus.basis
    return Operator(v @ u @ v.conj().T)


def readout_probability_density(psiT) -> float:
    """``||psi_T||**2``, a density with respect to the product readout measure."""
    return norm_squared(psiT)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integrating over a single readout value."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, lo: float, hi: float, panels: int = 64,
                       order: int = 16) -> "QuadratureRule":
        """Composite Gauss-Legendre rule on ``[lo, hi]``."""
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return cls(nodes, weights)

    @classmethod
    def covering(cls, spec: MeasurementSpec, width: float = 8.0, panels: int = 64,
                 order: int = 16) -> "QuadratureRule":
        """Rule over ``[lambda_min - width*sigma, lambda_max + width*sigma]``."""
        lam = spec.observable.eigh[0]
        sigma = 1.0 / math.sqrt(4.0 * spec.kappa * spec.grid.dt)
        return cls.gauss_legendre(lam[0] - width * sigma, lam[-1] + width * sigma,
                                  panels, order)


def _tail_mass(rule: QuadratureRule, spec: MeasurementSpec) -> float:
    """Gaussian mass of the readout density falling outside the rule's range."""
    lam = spec.observable.eigh[0]
    sigma = 1.0 / math.sqrt(4.0 * spec.kappa * spec.grid.dt)
    lo, hi = float(np.min(rule.nodes)), float(np.max(rule.nodes))
    below = 0.5 * math.erfc((lam[0] - lo) / (sigma * math.sqrt(2)))
    above = 0.5 * math.erfc((hi - lam[-1]) / (sigma * math.sqrt(2)))
    return below + above


def check_generalized_unitarity(spec: MeasurementSpec, H, quadrature: QuadratureRule | None = None,
                                steps: int = 1, method: str = "split",
                                tail_tol: float = 1e-10) -> float:
    """Residual ``|| sum_q w_q M(a_q)^dagger M(a_q) - I ||_2`` of the readout quadrature.

    Parameters
    ----------
    steps : int
        1 for a single step; 2 for the nested two-step sum
        ``sum_{a1,a2} M(a1)^dagger M(a2)^dagger M(a2) M(a1)``.
    method : {"split", "exact"}
        ``"split"`` uses the Strang step (residual is pure quadrature error
        for every ``H``); ``"exact"`` uses ``exp(-i H_[a] dt)``, whose
        residual is ``O(dt**2)`` when ``[H, A] != 0``.

    A :class:`RuntimeWarning` carries the estimated tail mass when the rule
    does not cover the readout density to ``tail_tol``.
    """
    if spec.kappa <= 0:
        raise ValueError("generalized unitarity needs kappa > 0 (readout measure is degenerate)")
    if steps not in (1, 2):
        raise ValueError("steps must be 1 or 2")
    quadrature = quadrature or QuadratureRule.covering(spec)
    tail = _tail_mass(quadrature, spec)
    if tail > tail_tol:
        warnings.warn(
            f"quadrature under-resolves the readout density: estimated tail mass {tail:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    dt = spec.grid.dt
    A = spec.observable
    if method == "split":
        kraus = StrangKraus(H, A, spec.kappa, dt)
        mats = np.array([kraus(a) for a in quadrature.nodes])
    elif method == "exact":
        mats = np.array([exact_step(H, A, a, spec.kappa, dt).entries for a in quadrature.nodes])
    else:
        raise ValueError(f"unknown method {method!r}")
    w = quadrature.weights * readout_measure_factor(spec.kappa, dt)
    mdm = np.einsum("q,qji,qjk->ik", w, mats.conj(), mats)
    if steps == 2:
        # sum_{a1} M1^dagger (sum_{a2} M2^dagger M2) M1, summed literally over a1
        mdm = np.einsum("q,qji,jl,qlk->ik", w, mats.conj(), mdm, mats)
    return float(np.linalg.norm(mdm - np.eye(A.dim), 2))
