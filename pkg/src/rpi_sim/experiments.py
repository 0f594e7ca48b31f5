"""Canned experiments: Zeno freezing, dephasing rates, readout-error scaling and
the strong-measurement (projective) limit.

Every experiment returns an :class:`ExperimentResult` whose table is what the
CLI writes to CSV. Stochastic parts are deterministic given ``seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from scipy import stats

from .core import (
    MeasurementSpec,
    Readout,
    TimeGrid,
    as_operator,
    as_state,
    basis_state,
    pauli_z,
    pure_density,
    rabi,
    zero_operator,
)
from .nonselective import master_series, propagate_master
from .output import Table
from .sampler import run_ensemble
from .selective import propagate_selective

ZENO_GRID = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


@dataclass
class ExperimentResult:
    name: str
    table: Table
    summary: dict = field(default_factory=dict)
    # label -> (x, y) for an optional plot
    series: dict = field(default_factory=dict)
    xlabel: str = "x"
    ylabel: str = "y"
    logx: bool = False
    logy: bool = False


def sub_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for the ``index``-th point of an experiment."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


# --------------------------------------------------------------------------- Zeno

def zeno_survival_master(omega: float, kappa: float, T: float) -> float:
    """Population of ``|+z>`` at ``T`` from the master equation, starting in ``|+z>``."""
    H = rabi(omega)
    spec = MeasurementSpec.with_default_steps(pauli_z(), kappa, T, H=H)
    rho = propagate_master(pure_density(basis_state(2, 0)), spec, H)
    return float(rho[0, 0].real)


def zeno_experiment(omega: float = 1.0, kappas=None, T: float | None = None,
                    n_traj: int = 1000, seed: int = 0, threads: int = 1) -> ExperimentResult:
    """Survival of ``|+z>`` under a Rabi drive ``(omega/2) sigma_x`` while ``sigma_z``
    is monitored with each resolution in ``kappas`` (default ``omega`` times
    0, 0.5, 1, 2, 5, 10, 20). ``T`` defaults to a full flip time ``pi/omega``.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    T = math.pi / omega if T is None else float(T)
    kappas = [omega * r for r in ZENO_GRID] if kappas is None else list(kappas)
    if any(k < 0 for k in kappas):
        raise ValueError("kappa values must be >= 0")
    H, A = rabi(omega), pauli_z()
    psi0 = basis_state(2, 0)
    table = Table(["kappa", "kappa_over_omega", "steps", "survival_master",
                   "survival_ensemble", "mc_error"])
    for i, kappa in enumerate(kappas):
        spec = MeasurementSpec.with_default_steps(A, kappa, T, H=H)
        rho = propagate_master(pure_density(psi0), spec, H)
        s_master = float(rho[0, 0].real)
        if kappa == 0:
            # no readout to sample: every record gives the same unitary evolution
            psi = propagate_selective(psi0, Readout.constant(spec.grid, 0.0), spec, H)
            s_ens, err = float(abs(psi[0]) ** 2), 0.0
        else:
            trajs = run_ensemble(psi0, spec, H, n_traj, sub_seed(seed, i), threads=threads)
            pops = np.array([abs(t.final_state[0]) ** 2 for t in trajs])
            s_ens = float(pops.mean())
            err = float(pops.std(ddof=1) / math.sqrt(len(pops))) if len(pops) > 1 else 0.0
        table.append(float(kappa), float(kappa / omega), spec.grid.steps, s_master, s_ens, err)
    surv = table.column("survival_master")
    summary = {
        "omega": omega,
        "T": T,
        "monotone_master": bool(all(b >= a - 1e-12 for a, b in zip(surv, surv[1:]))),
    }
    ratio = table.column("kappa_over_omega")
    return ExperimentResult(
        "zeno", table, summary,
        series={"master": (ratio, surv), "ensemble": (ratio, table.column("survival_ensemble"))},
        xlabel="kappa / omega", ylabel="survival probability",
    )


# ------------------------------------------------------------------ decoherence

def joint_eigenbasis(A, H, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of ``A`` and a basis diagonalizing both ``A`` and ``H``.

    ``H`` must commute with ``A``; inside each degenerate eigenspace of ``A``
    the basis is chosen to diagonalize ``H``.
    """
    A = as_operator(A, hermitian=True)
    H = as_operator(H, hermitian=True)
    lam, v = A.eigh
    v = np.array(v)
    start = 0
    while start < lam.size:
        stop = start + 1
        while stop < lam.size and lam[stop] - lam[start] < tol:
            stop += 1
        if stop - start > 1:
            block = v[:, start:stop]
            _, w = np.linalg.eigh(block.conj().T @ H.entries @ block)
            v[:, start:stop] = block @ w
        start = stop
    return np.array(lam), v


def decoherence_experiment(kappa: float, T: float, H, A=None,
                           steps: int | None = None) -> ExperimentResult:
    """Fit the decay rate of every off-diagonal element ``rho_mn`` in the joint
    eigenbasis and compare with ``kappa (lambda_m - lambda_n)**2 / 2``.

    Starts from the uniform superposition of the joint eigenbasis; the fit is
    a least-squares line through ``log|rho_mn(t)|`` on every grid point.

    Raises
    ------
    ValueError
        If ``[H, A]`` exceeds 1e-10 (element-wise).
    """
    A = pauli_z() if A is None else as_operator(A, hermitian=True)
    H = as_operator(H, hermitian=True)
    comm = float(np.max(np.abs(H.commutator(A))))
    if comm > 1e-10:
        raise ValueError(f"H does not commute with A (max |[H, A]| = {comm:.3g})")
    lam, v = joint_eigenbasis(A, H)
    d = A.dim
    if steps is None:
        spec = MeasurementSpec.with_default_steps(A, kappa, T, H=H, min_steps=200)
    else:
        spec = MeasurementSpec(A, kappa, TimeGrid(T, steps))
    psi0 = v @ (np.ones(d) / math.sqrt(d))
    times, states = master_series(pure_density(psi0), spec, H)
    in_basis = np.einsum("ai,tab,bj->tij", v.conj(), states, v)
    table = Table(["m", "n", "lambda_m", "lambda_n", "fitted_rate", "analytic_rate",
                   "abs_error", "rel_error"])
    for m in range(d):
        for n in range(m + 1, d):
            mag = np.abs(in_basis[:, m, n])
            slope = np.polyfit(times, np.log(mag), 1)[0]
            fitted = float(-slope)
            analytic = 0.5 * kappa * float(lam[m] - lam[n]) ** 2
            abs_err = abs(fitted - analytic)
            rel = abs_err / analytic if analytic > 0 else float("nan")
            table.append(m, n, float(lam[m]), float(lam[n]), fitted, analytic, abs_err, rel)
    rel_errors = [r for r in table.column("rel_error") if not math.isnan(r)]
    summary = {
        "kappa": kappa,
        "T": T,
        "steps": spec.grid.steps,
        "max_rel_error": max(rel_errors) if rel_errors else 0.0,
    }
    return ExperimentResult(
        "decoherence", table, summary,
        series={f"|rho_{m}{n}|": (list(times), list(np.abs(in_basis[:, m, n])))
                for m in range(d) for n in range(m + 1, d)},
        xlabel="t", ylabel="|rho_mn|", logy=True,
    )


# ----------------------------------------------------------------- error scaling

def error_scaling_experiment(kappa: float, T_values, n_traj: int = 10_000, seed: int = 0,
                             A=None, level: int = 0, threads: int = 1) -> ExperimentResult:
    """Variance of the time-averaged readout versus measurement duration.

    The system has ``H = 0`` and starts in eigenstate ``level`` of ``A``, so the
    readout is pure measurement noise. The expected variance is
    ``1/(4 kappa T)``; the summary carries the log-log slope (expected -1).
    """
    A = pauli_z() if A is None else as_operator(A, hermitian=True)
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    T_values = [float(t) for t in T_values]
    if len(T_values) < 2:
        raise ValueError("need at least two durations for a slope")
    lam, v = A.eigh
    psi0 = np.array(v[:, level])
    H = zero_operator(A.dim)
    table = Table(["T", "steps", "mean_abar", "var_abar", "expected_var", "var_stderr", "z_score"])
    for i, T in enumerate(T_values):
        spec = MeasurementSpec.with_default_steps(A, kappa, T)
        trajs = run_ensemble(psi0, spec, H, n_traj, sub_seed(seed, i), threads=threads)
        abar = np.array([t.readout.time_average() for t in trajs])
        var = float(abar.var(ddof=1))
        expected = spec.readout_error_sq
        se = expected * math.sqrt(2.0 / (n_traj - 1))
        table.append(T, spec.grid.steps, float(abar.mean()), var, expected, se,
                     (var - expected) / se)
    fit = stats.linregress(np.log(table.column("T")), np.log(table.column("var_abar")))
    summary = {
        "kappa": kappa,
        "eigenvalue": float(lam[level]),
        "slope": float(fit.slope),
        "intercept": float(fit.intercept),
        "slope_stderr": float(fit.stderr),
        "max_abs_z": float(max(abs(z) for z in table.column("z_score"))),
    }
    return ExperimentResult(
        "error_scaling", table, summary,
        series={"empirical": (table.column("T"), table.column("var_abar")),
                "1/(4 kappa T)": (table.column("T"), table.column("expected_var"))},
        xlabel="T", ylabel="variance of time-averaged readout", logx=True, logy=True,
    )


# ------------------------------------------------------------- projective limit

def eigenspaces(A, tol: float = 1e-9) -> tuple[np.ndarray, list[np.ndarray]]:
    """Distinct eigenvalues of ``A`` and an orthonormal basis of each eigenspace."""
    lam, v = as_operator(A, hermitian=True).eigh
    values, blocks = [], []
    start = 0
    while start < lam.size:
        stop = start + 1
        while stop < lam.size and lam[stop] - lam[start] < tol:
            stop += 1
        values.append(float(lam[start:stop].mean()))
        blocks.append(np.array(v[:, start:stop]))
        start = stop
    return np.array(values), blocks


def born_weights(psi, A) -> np.ndarray:
    """Probability of each distinct eigenvalue of ``A`` in state ``psi``."""
    psi = as_state(psi)
    psi = psi / np.linalg.norm(psi)
    _, blocks = eigenspaces(A)
    return np.array([float(np.sum(np.abs(b.conj().T @ psi) ** 2)) for b in blocks])


def projective_limit_experiment(kappa_values, T: float, psi0, A, n_traj: int = 10_000,
                                seed: int = 0, collapse_fidelity: float = 0.99,
                                threads: int = 1) -> ExperimentResult:
    """Pure measurement pulse (``H = 0``) of increasing strength.

    For each ``kappa`` the table reports the fraction of final states within
    ``collapse_fidelity`` of an eigenspace of ``A``, the total-variation
    distance between selected-eigenspace frequencies and Born weights, the
    largest per-outcome deviation in multinomial standard errors, and the
    mean fidelity with ``psi0``.
    """
    A = as_operator(A, hermitian=True)
    psi0 = as_state(psi0, A.dim)
    psi0 = psi0 / np.linalg.norm(psi0)
    _, blocks = eigenspaces(A)
    born = born_weights(psi0, A)
    H = zero_operator(A.dim)
    table = Table(["kappa", "kappa_T", "steps", "collapse_fraction", "born_tv",
                   "born_max_z", "born_within_3sigma", "fidelity_initial"])
    for i, kappa in enumerate(sorted(float(k) for k in kappa_values)):
        spec = MeasurementSpec.with_default_steps(A, kappa, T)
        trajs = run_ensemble(psi0, spec, H, n_traj, sub_seed(seed, i), threads=threads)
        final = np.array([t.final_state for t in trajs])
        weights = np.stack([np.sum(np.abs(final @ b.conj()) ** 2, axis=1) for b in blocks], axis=1)
        collapsed = float(np.mean(weights.max(axis=1) > collapse_fidelity))
        freq = np.bincount(weights.argmax(axis=1), minlength=len(blocks)) / n_traj
        sigma = np.sqrt(born * (1 - born) / n_traj)
        dev = np.abs(freq - born)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(sigma > 0, dev / np.where(sigma > 0, sigma, 1.0),
                         np.where(dev > 0, np.inf, 0.0))
        fid0 = float(np.mean(np.abs(final @ psi0.conj()) ** 2))
        table.append(kappa, kappa * T, spec.grid.steps, collapsed, float(0.5 * dev.sum()),
                     float(z.max()), bool(np.all(z <= 3.0)), fid0)
    summary = {"T": T, "born_weights": [float(b) for b in born]}
    kt = table.column("kappa_T")
    return ExperimentResult(
        "projective_limit", table, summary,
        series={"collapse fraction": (kt, table.column("collapse_fraction")),
                "Born TV distance": (kt, table.column("born_tv"))},
        xlabel="kappa T", ylabel="fraction / distance", logx=True,
    )


EXPERIMENTS = {
    "zeno": (zeno_experiment, "survival of |+z> under Rabi drive vs measurement strength"),
    "decoherence": (decoherence_experiment, "fitted off-diagonal decay rates vs kappa*gap^2/2"),
    "error_scaling": (error_scaling_experiment, "variance of time-averaged readout vs T"),
    "projective_limit": (projective_limit_experiment, "collapse and Born statistics as kappa*T grows"),
}
