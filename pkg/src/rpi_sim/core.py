"""Domain types and small dense complex linear algebra.

All quantities use hbar = 1. Operators are dense ``complex128`` matrices of
dimension at most 64; state vectors and density matrices are plain numpy
arrays validated by :func:`as_state` and :func:`as_density_matrix`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

MAX_DIM = 64
HERMITIAN_TOL = 1e-12
EXP_RANGE_LIMIT = 700.0


class HermiticityError(ValueError):
    """Raised when a matrix certified (or required) as Hermitian is not."""

    def __init__(self, asymmetry: float, what: str = "operator"):
        self.asymmetry = float(asymmetry)
        super().__init__(
            f"{what} is not Hermitian: max |M - M^dagger| = {self.asymmetry:.6g}"
        )


class RangeError(ArithmeticError):
    """Raised when an exponential would leave the representable range."""


class NumericalError(ArithmeticError):
    """Raised when an integrator detects drift or instability."""


def max_asymmetry(matrix: np.ndarray) -> float:
    m = np.asarray(matrix)
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense complex square matrix with an optional Hermiticity certificate.

    The certificate is checked once at construction. Entries are stored as a
    read-only ``complex128`` array.
    """

    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self) -> None:
        m = np.array(self.entries, dtype=complex, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
            raise ValueError(f"operator must be a non-empty square matrix, got shape {m.shape}")
        if m.shape[0] > MAX_DIM:
            raise ValueError(f"dimension {m.shape[0]} exceeds the supported maximum {MAX_DIM}")
        if self.hermitian:
            asym = max_asymmetry(m)
            if asym > HERMITIAN_TOL:
                raise HermiticityError(asym)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @classmethod
    def herm(cls, matrix) -> "Operator":
        """Build a certified Hermitian operator, symmetrizing away roundoff."""
        m = np.asarray(matrix, dtype=complex)
        asym = max_asymmetry(m)
        if asym > HERMITIAN_TOL:
            raise HermiticityError(asym)
        return cls(0.5 * (m + m.conj().T), hermitian=True)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached ``(eigenvalues, eigenvectors)``; see :func:`eigendecompose`."""
        return eigendecompose(self)

    def commutator(self, other: "Operator") -> np.ndarray:
        a, b = self.entries, other.entries
        return a @ b - b @ a

    def __matmul__(self, other):
        other = other.entries if isinstance(other, Operator) else other
        return self.entries @ other

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def as_operator(op, hermitian: bool = False) -> Operator:
    if isinstance(op, Operator):
        if hermitian and not op.hermitian:
            return Operator.herm(op.entries)
        return op
    return Operator.herm(op) if hermitian else Operator(op)


def as_state(psi, dim: int | None = None) -> np.ndarray:
    """Return ``psi`` as a 1-D complex array (norm is not constrained)."""
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.size == 0:
        raise ValueError("state vector is empty")
    if dim is not None and v.size != dim:
        raise ValueError(f"state has dimension {v.size}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("state vector contains non-finite amplitudes")
    return v


def as_density_matrix(rho, dim: int | None = None, trace_tol: float = 1e-10,
                      eig_tol: float = 1e-10) -> np.ndarray:
    """Validate and return a density matrix as a complex array."""
    r = np.asarray(rho, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {r.shape}")
    if dim is not None and r.shape[0] != dim:
        raise ValueError(f"density matrix has dimension {r.shape[0]}, expected {dim}")
    asym = max_asymmetry(r)
    if asym > HERMITIAN_TOL:
        raise HermiticityError(asym, "density matrix")
    tr = np.trace(r).real
    if abs(tr - 1.0) > trace_tol:
        raise ValueError(f"density matrix trace is {tr!r}, expected 1")
    lam_min = float(np.linalg.eigvalsh(r).min())
    if lam_min < -eig_tol:
        raise ValueError(f"density matrix has negative eigenvalue {lam_min:.3g}")
    return r


def pure_density(psi) -> np.ndarray:
    v = as_state(psi)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid of ``steps`` intervals over ``[0, duration]``."""

    duration: float
    steps: int

    def __post_init__(self) -> None:
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"duration must be positive and finite, got {self.duration}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def dt(self) -> float:
        return self.duration / self.steps

    @property
    def times(self) -> np.ndarray:
        """Grid points ``t_0 = 0, ..., t_N = T``."""
        return np.arange(self.steps + 1) * self.dt

    def halved(self) -> "TimeGrid":
        return TimeGrid(self.duration, 2 * self.steps)

    @staticmethod
    def default_steps(duration: float, kappa: float, spread: float,
                      max_damping: float = 0.1, min_steps: int = 1) -> int:
        """Smallest N with ``kappa * dt * spread**2 <= max_damping``."""
        if kappa <= 0 or spread <= 0:
            return max(min_steps, 1)
        n = math.ceil(kappa * duration * spread**2 / max_damping - 1e-12)
        return max(n, min_steps, 1)


@dataclass(frozen=True, eq=False)
class Readout:
    """Piecewise-constant measurement record: ``values[k]`` holds on step ``k``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        if v.size != self.grid.steps:
            raise ValueError(
                f"readout has {v.size} values but the grid has {self.grid.steps} steps"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "Readout":
        return cls(grid, np.full(grid.steps, float(value)))

    def time_average(self) -> float:
        return float(np.mean(self.values))

    def refined(self) -> "Readout":
        """Same piecewise-constant curve on a grid with half the step."""
        return Readout(self.grid.halved(), np.repeat(self.values, 2))

    def split(self, k: int) -> tuple["Readout", "Readout"]:
        """Split after step ``k`` into two readouts on equal-``dt`` grids."""
        if not 0 < k < self.grid.steps:
            raise ValueError("split index must lie strictly inside the grid")
        dt = self.grid.dt
        head = Readout(TimeGrid(k * dt, k), self.values[:k])
        tail = Readout(TimeGrid((self.grid.steps - k) * dt, self.grid.steps - k),
                       self.values[k:])
        return head, tail


@dataclass(frozen=True, eq=False)
class MeasurementSpec:
    """Continuous monitoring of ``observable`` with resolution ``kappa``.

    The time-averaged readout error over the whole run satisfies
    ``Delta a_T**2 = 1 / (4 * kappa * T)`` under the readout measure used in
    this package (see :mod:`rpi_sim.selective`).
    """

    observable: Operator
    kappa: float
    grid: TimeGrid

    def __post_init__(self) -> None:
        obs = as_operator(self.observable, hermitian=True)
        object.__setattr__(self, "observable", obs)
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if not isinstance(self.grid, TimeGrid):
            raise TypeError("grid must be a TimeGrid")

    @classmethod
    def with_default_steps(cls, observable, kappa: float, duration: float, H=None,
                           min_steps: int = 1, max_phase: float = 0.02) -> "MeasurementSpec":
        """Choose N so that ``kappa * dt * (lambda_max - lambda_min)**2 <= 0.1``.

        When ``H`` is given, N is also large enough that
        ``dt * (E_max - E_min) <= max_phase``.
        """
        obs = as_operator(observable, hermitian=True)
        lam = obs.eigh[0]
        n = TimeGrid.default_steps(duration, kappa, float(lam[-1] - lam[0]),
                                   min_steps=min_steps)
        if H is not None:
            e = as_operator(H, hermitian=True).eigh[0]
            n = max(n, math.ceil(duration * float(e[-1] - e[0]) / max_phase - 1e-12))
        return cls(obs, kappa, TimeGrid(duration, n))

    @property
    def dim(self) -> int:
        return self.observable.dim

    @property
    def readout_error_sq(self) -> float:
        """Expected variance of the time-averaged readout, ``1/(4 kappa T)``."""
        return 1.0 / (4.0 * self.kappa * self.grid.duration)

    def with_grid(self, grid: TimeGrid) -> "MeasurementSpec":
        return MeasurementSpec(self.observable, self.kappa, grid)


def eigendecompose(op: Operator) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvector matrix of a Hermitian operator.

    Raises
    ------
    HermiticityError
        If ``op`` does not carry a Hermiticity certificate.
    """
    if not isinstance(op, Operator) or not op.hermitian:
        m = op.entries if isinstance(op, Operator) else np.asarray(op)
        raise HermiticityError(max_asymmetry(m))
    lam, vecs = np.linalg.eigh(op.entries)
    lam.setflags(write=False)
    vecs.setflags(write=False)
    return lam, vecs


def matrix_exponential(m, scale: complex = 1.0) -> Operator:
    """Return ``exp(scale * m)``.

    Hermitian operators with a purely real or purely imaginary ``scale`` are
    exponentiated in their eigenbasis; everything else goes through
    scaling-and-squaring (``scipy.linalg.expm``).

    Raises
    ------
    RangeError
        If the real part of any eigenvalue of ``scale * m`` exceeds 700 in
        magnitude.
    """
    op = as_operator(m)
    scale = complex(scale)
    if op.hermitian and (scale.real == 0.0 or scale.imag == 0.0):
        lam, v = op.eigh
        z = scale * lam
        _check_range(z)
        return Operator((v * np.exp(z)) @ v.conj().T)
    a = scale * op.entries
    _check_range(np.linalg.eigvals(a))
    return Operator(scipy.linalg.expm(a))


def _check_range(z: np.ndarray) -> None:
    worst = float(np.max(np.abs(np.real(z)))) if np.size(z) else 0.0
    if worst > EXP_RANGE_LIMIT:
        raise RangeError(f"exponent real part {worst:.4g} exceeds {EXP_RANGE_LIMIT:g}")


def norm_squared(psi) -> float:
    v = as_state(psi)
    return float(np.vdot(v, v).real)


def purity(rho) -> float:
    """``Tr rho**2`` of a (Hermitian) density matrix."""
    r = np.asarray(rho, dtype=complex)
    return float(np.sum(np.abs(r) ** 2))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma`` for Hermitian arguments."""
    d = np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex)
    d = 0.5 * (d + d.conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(d))))


def fidelity_pure(psi, phi) -> float:
    """``|<psi|phi>|**2`` for normalized states."""
    return float(abs(np.vdot(as_state(psi), as_state(phi))) ** 2)


# Named operators used by the CLI presets and the experiments.

def pauli_x() -> Operator:
    return Operator.herm([[0, 1], [1, 0]])


def pauli_y() -> Operator:
    return Operator.herm([[0, -1j], [1j, 0]])


def pauli_z() -> Operator:
    return Operator.herm([[1, 0], [0, -1]])


def rabi(omega: float) -> Operator:
    """Drive Hamiltonian ``(omega/2) * sigma_x``."""
    return Operator.herm(0.5 * omega * np.array([[0, 1], [1, 0]]))


def zero_operator(dim: int) -> Operator:
    return Operator(np.zeros((dim, dim)), hermitian=True)


def basis_state(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v
