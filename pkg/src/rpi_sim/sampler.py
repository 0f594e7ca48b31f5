"""Exact sampling of measurement readouts and conditioned states.

One step from a state ``psi`` works as follows:

1. ``phi = exp(-i H dt/2) psi``, expanded in the eigenbasis of ``A`` with
   coefficients ``c_n``.
2. The readout value has density
   ``p(a) = sum_n |c_n|^2 sqrt(2 kappa dt/pi) exp(-2 kappa dt (a - lambda_n)^2)``,
   a Gaussian mixture. Pick component ``n`` with probability ``|c_n|^2``, then
   ``a ~ Normal(lambda_n, 1/(4 kappa dt))``.
3. ``psi_next = M(a) psi`` with the split step of :mod:`rpi_sim.selective`.

Chaining these conditionals draws the whole readout from ``||psi_T||^2 d alpha``
exactly, so every trajectory carries weight 1.

Random numbers
--------------
Stream ``(seed, stream_id)`` is numpy's ``Philox`` (Philox4x64-10) keyed with
``seed + 2**64 * stream_id`` and read through ``Generator.random``. Each step
consumes two uniforms: the first selects the mixture component, the second is
mapped to a standard normal by the inverse normal CDF (``scipy.special.ndtri``)
after shifting by ``2**-54`` onto the open interval.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import MeasurementSpec, Readout, as_state
from .selective import StrangKraus

_HALF_ULP = 2.0**-54
SEED_MAX = 2**64


class SeededStream:
    """Reproducible uniform stream identified by ``(seed, stream_id)``."""

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= int(seed) < SEED_MAX:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        if not 0 <= int(stream_id) < SEED_MAX:
            raise ValueError(f"stream_id must be in [0, 2**64), got {stream_id}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        key = self.seed + (self.stream_id << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:
        return f"SeededStream(seed={self.seed}, stream_id={self.stream_id})"

    def uniforms(self, n: int) -> np.ndarray:
        """Next ``n`` uniforms on the open interval ``(0, 1)``."""
        return self._gen.random(n) + _HALF_ULP


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One sampled measurement record and its conditioned state.

    ``final_state`` is normalized; the unnormalized ``psi_T`` is
    ``final_state * exp(log_prob_density / 2)``, where ``log_prob_density`` is
    ``log ||psi_T||^2`` (the readout's probability density). ``states`` holds
    normalized states at the recorded steps when requested.
    """

    readout: Readout
    final_state: np.ndarray
    log_prob_density: float
    log_weight: float = 0.0
    states: np.ndarray | None = None
    stream: tuple[int, int] | None = None

    @property
    def unnormalized_state(self) -> np.ndarray:
        return self.final_state * math.exp(0.5 * self.log_prob_density)


def _require_measurement(spec: MeasurementSpec) -> None:
    if spec.kappa * spec.grid.dt <= 0:
        raise ValueError(
            "readout sampling needs kappa*dt > 0 (the readout variance 1/(4 kappa dt) "
            "is infinite); for kappa = 0 use selective.propagate_selective, which "
            "reduces to unitary evolution"
        )


def _apply(m: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Row-wise ``m @ c[i]`` with a fixed summation order for any batch size."""
    out = c[:, 0:1] * m[:, 0]
    for j in range(1, m.shape[1]):
        out = out + c[:, j : j + 1] * m[:, j]
    return out


def _step_batch(kraus: StrangKraus, c: np.ndarray, u: np.ndarray):
    """Advance normalized eigenbasis coefficients ``c`` by one sampled step.

    ``u`` has shape ``(n, 2)``. Returns readout values, the unnormalized next
    coefficients and their squared norms.
    """
    lam = kraus.eigenvalues
    sigma = 1.0 / math.sqrt(4.0 * kraus.kappa * kraus.dt)
    phi = _apply(kraus.half_step_a, c)
    born = phi.real**2 + phi.imag**2
    cdf = np.cumsum(born, axis=1)
    pick = np.sum(cdf < (u[:, 0] * cdf[:, -1])[:, None], axis=1)
    pick = np.minimum(pick, lam.size - 1)
    a = lam[pick] + sigma * ndtri(u[:, 1])
    damp = np.exp(-kraus.kappa * kraus.dt * (lam[None, :] - a[:, None]) ** 2)
    nxt = _apply(kraus.half_step_a, phi * damp)
    nrm2 = np.sum(nxt.real**2 + nxt.imag**2, axis=1)
    return a, nxt, nrm2


def _evolve_batch(kraus: StrangKraus, c0: np.ndarray, draws: np.ndarray,
                  record_every: int | None = None):
    """Run ``draws.shape[0]`` trajectories; ``draws`` has shape ``(n, N, 2)``."""
    n, steps, _ = draws.shape
    c = np.repeat(c0[None, :], n, axis=0)
    readouts = np.empty((n, steps))
    log_p = np.zeros(n)
    recorded = [c.copy()] if record_every else None
    for k in range(steps):
        a, c, nrm2 = _step_batch(kraus, c, draws[:, k, :])
        readouts[:, k] = a
        log_p += np.log(nrm2)
        c = c / np.sqrt(nrm2)[:, None]
        if record_every and ((k + 1) % record_every == 0 or k + 1 == steps):
            recorded.append(c.copy())
    states = np.stack(recorded, axis=1) if record_every else None
    return readouts, c, log_p, states


def _initial_coefficients(kraus: StrangKraus, psi0) -> np.ndarray:
    psi = as_state(psi0, kraus.dim)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ValueError("initial state has zero norm")
    if abs(nrm - 1.0) > 1e-10:
        raise ValueError(f"initial state must be normalized, norm is {nrm!r}")
    return kraus.basis.conj().T @ psi


def sample_step(psi, spec: MeasurementSpec, H, stream: SeededStream):
    """Draw one readout value and apply its step operator.

    Returns ``(a_k, psi_next)`` with ``psi_next = M(a_k) psi`` (not renormalized).
    """
    _require_measurement(spec)
    kraus = StrangKraus(H, spec.observable, spec.kappa, spec.grid.dt)
    psi = as_state(psi, kraus.dim)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise ValueError("cannot sample from a zero state")
    c = (kraus.basis.conj().T @ psi / nrm)[None, :]
    a, nxt, _ = _step_batch(kraus, c, stream.uniforms(2)[None, :])
    return float(a[0]), nrm * (kraus.basis @ nxt[0])


def _trajectories(kraus, spec, c0, streams, record_every):
    steps = spec.grid.steps
    draws = np.stack([s.uniforms(2 * steps).reshape(steps, 2) for s in streams])
    readouts, c, log_p, states = _evolve_batch(kraus, c0, draws, record_every)
    v = kraus.basis
    out = []
    for i, s in enumerate(streams):
        recorded = None if states is None else states[i] @ v.T
        out.append(
            Trajectory(
                readout=Readout(spec.grid, readouts[i]),
                final_state=v @ c[i],
                log_prob_density=float(log_p[i]),
                states=recorded,
                stream=(s.seed, s.stream_id),
            )
        )
    return out


def sample_trajectory(psi0, spec: MeasurementSpec, H, stream: SeededStream,
                      record_every: int | None = None) -> Trajectory:
    """Sample a full readout and conditioned final state.

    Identical in distribution (and in random-number consumption) to chaining
    :func:`sample_step` over the grid.
    """
    _require_measurement(spec)
    kraus = StrangKraus(H, spec.observable, spec.kappa, spec.grid.dt)
    c0 = _initial_coefficients(kraus, psi0)
    return _trajectories(kraus, spec, c0, [stream], record_every)[0]


def run_ensemble(psi0, spec: MeasurementSpec, H, n_traj: int, seed: int,
                 threads: int = 1, chunk_size: int = 2048,
                 record_every: int | None = None) -> list[Trajectory]:
    """Sample ``n_traj`` trajectories; trajectory ``i`` uses stream ``(seed, i)``.

    Output is ordered by stream id and bit-identical for any ``threads`` or
    ``chunk_size``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    _require_measurement(spec)
    kraus = StrangKraus(H, spec.observable, spec.kappa, spec.grid.dt)
    c0 = _initial_coefficients(kraus, psi0)
    chunks = [range(lo, min(lo + chunk_size, n_traj)) for lo in range(0, n_traj, chunk_size)]

    def work(ids):
        return _trajectories(kraus, spec, c0, [SeededStream(seed, i) for i in ids], record_every)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(ids) for ids in chunks]
    return [t for part in parts for t in part]
