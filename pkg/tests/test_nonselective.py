import math

import numpy as np
import pytest

from conftest import random_hermitian, random_state
from rpi_sim.core import (
    MeasurementSpec,
    NumericalError,
    Operator,
    TimeGrid,
    pauli_x,
    pauli_z,
    pure_density,
    purity,
    rabi,
    trace_distance,
    zero_operator,
)
from rpi_sim.nonselective import ensemble_average, lindblad_rhs, master_series, propagate_master
from rpi_sim.sampler import run_ensemble


def random_density(rng, d, rank=None):
    rank = rank or d
    vs = [random_state(rng, d) for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    return sum(wi * np.outer(v, v.conj()) for wi, v in zip(w, vs))


class TestRhs:
    def test_maximally_mixed_is_stationary(self, rng):
        h, a = random_hermitian(rng, 4), random_hermitian(rng, 4)
        np.testing.assert_allclose(lindblad_rhs(np.eye(4) / 4, h, a, 2.0), 0, atol=1e-15)

    def test_dephasing_rate(self):
        rho = np.array([[0.5, 0.3 - 0.1j], [0.3 + 0.1j, 0.5]])
        out = lindblad_rhs(rho, np.zeros((2, 2)), pauli_z(), 1.3)
        assert out[0, 1] == pytest.approx(-2 * 1.3 * rho[0, 1])
        assert out[0, 0] == 0

    def test_joint_eigenbasis_fixed_point(self):
        rho = np.diag([0.2, 0.3, 0.5])
        np.testing.assert_allclose(
            lindblad_rhs(rho, np.diag([1.0, -2.0, 0.5]), np.diag([0.0, 1.0, 3.0]), 4.0), 0, atol=0)

    def test_traceless_hermitian(self, rng):
        out = lindblad_rhs(random_density(rng, 5), random_hermitian(rng, 5), random_hermitian(rng, 5), 0.8)
        assert abs(np.trace(out)) < 1e-12
        assert np.max(np.abs(out - out.conj().T)) < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            lindblad_rhs(np.eye(3) / 3, np.zeros((2, 2)), pauli_z(), 1.0)


class TestPropagateMaster:
    def test_qubit_dephasing(self):
        kappa, T = 0.8, 1.5
        rho0 = pure_density(np.array([0.6, 0.8j]))
        spec = MeasurementSpec(pauli_z(), kappa, TimeGrid(T, 300))
        rho = propagate_master(rho0, spec, zero_operator(2))
        assert rho[0, 1] == pytest.approx(rho0[0, 1] * math.exp(-2 * kappa * T), abs=1e-10)
        np.testing.assert_allclose(np.diag(rho), np.diag(rho0), atol=1e-14)

    def test_rabi(self):
        omega, T = 1.7, 2.3
        spec = MeasurementSpec(pauli_z(), 0.0, TimeGrid(T, 400))
        rho = propagate_master(pure_density([1, 0]), spec, rabi(omega))
        z = np.trace(pauli_z().entries @ rho).real
        assert z == pytest.approx(math.cos(omega * T), abs=1e-9)

    def test_general_observable_eigenbasis(self, rng):
        a = Operator.herm(random_hermitian(rng, 3))
        lam, v = a.eigh
        rho0 = random_density(rng, 3)
        kappa, T = 0.6, 1.0
        spec = MeasurementSpec.with_default_steps(a, kappa, T, min_steps=400)
        rho = propagate_master(rho0, spec, zero_operator(3))
        r0 = v.conj().T @ rho0 @ v
        expected = r0 * np.exp(-0.5 * kappa * np.subtract.outer(lam, lam) ** 2 * T)
        np.testing.assert_allclose(v.conj().T @ rho @ v, expected, atol=1e-10)

    def test_invariants_random_runs(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 5))
            a = Operator.herm(random_hermitian(rng, d))
            h = Operator.herm(random_hermitian(rng, d))
            spec = MeasurementSpec.with_default_steps(a, rng.uniform(0.1, 3), rng.uniform(0.5, 2), H=h)
            _, states = master_series(pure_density(random_state(rng, d)), spec, h)
            traces = np.trace(states, axis1=1, axis2=2).real
            assert np.max(np.abs(traces - 1)) < 1e-9
            p = [purity(r) for r in states]
            assert np.all(np.diff(p) <= 1e-12)
            assert min(np.linalg.eigvalsh(r).min() for r in states) >= -1e-8

    def test_stationary_joint_eigenstates(self):
        rho0 = np.diag([0.1, 0.6, 0.3]).astype(complex)
        spec = MeasurementSpec(Operator.herm(np.diag([0.0, 1.0, 2.0])), 3.0, TimeGrid(1.0, 100))
        rho = propagate_master(rho0, spec, Operator.herm(np.diag([2.0, -1.0, 0.3])))
        np.testing.assert_allclose(rho, rho0, atol=1e-14)

    def test_instability_detected(self):
        spec = MeasurementSpec(pauli_z(), 100.0, TimeGrid(1.0, 2))
        with pytest.raises(NumericalError, match="dt <="):
            propagate_master(pure_density([1, 1j]), spec, pauli_x())

    def test_rejects_invalid_density(self):
        spec = MeasurementSpec(pauli_z(), 1.0, TimeGrid(1.0, 10))
        with pytest.raises(ValueError):
            propagate_master(np.eye(2), spec, pauli_x())


class TestEnsembleAverage:
    def test_single(self, rng):
        psi = random_state(rng, 3)
        est = ensemble_average([(psi, 1.0)])
        np.testing.assert_allclose(est.rho, np.outer(psi, psi.conj()), atol=1e-15)
        assert est.n == 1

    def test_equal_trajectories(self, rng):
        psi = random_state(rng, 2)
        est = ensemble_average([(3.0 * psi, 1.0)] * 5)
        np.testing.assert_allclose(est.rho, np.outer(psi, psi.conj()), atol=1e-15)
        np.testing.assert_allclose(est.stderr, 0, atol=1e-15)

    def test_weights(self):
        est = ensemble_average([([1, 0], 3.0), ([0, 1], 1.0)])
        np.testing.assert_allclose(est.rho, np.diag([0.75, 0.25]))

    def test_empty(self):
        with pytest.raises(ValueError):
            ensemble_average([])

    def test_converges_to_master(self):
        spec = MeasurementSpec.with_default_steps(pauli_z(), 1.0, 1.0)
        psi0 = np.array([1.0, 0.0])
        est = ensemble_average(run_ensemble(psi0, spec, rabi(1.0), 2000, seed=99))
        rho_m = propagate_master(pure_density(psi0), spec, rabi(1.0))
        assert trace_distance(est.rho, rho_m) < 3 * est.trace_distance_error()
