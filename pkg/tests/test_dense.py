import math

import numpy as np
import pytest

from floqkit.circuits import Circuit, DriveParams, cphase, floquet_drive, hadamard, rot
from floqkit.dense import (
    MeasurementPlan,
    NoiseModel,
    QubitCapError,
    StateVector,
    run_trajectories,
)
from floqkit.lattice import PauliString, build_patch
from floqkit.protocols import flux_free_prep

from conftest import circuit_unitary


def test_h_twice_identity():
    c = Circuit(1)
    c.append(hadamard(0))
    c.append(hadamard(0))
    sv = StateVector(1).apply_circuit(c)
    assert abs(sv.psi[0] - 1) < 1e-12


def test_cphase_is_cz_matrix():
    c = Circuit(2)
    c.append(cphase(0, 1, -math.pi))
    u = circuit_unitary(c, 2)
    assert np.allclose(u, np.diag([1, 1, 1, -1]), atol=1e-12)


def test_norm_preservation(rng):
    from conftest import random_clifford_circuit

    c = random_clifford_circuit(5, 60, rng, with_cpauli=True)
    c.append(rot(2, "y", 0.7))
    c.append(cphase(1, 3, -0.4))
    sv = StateVector(5).apply_circuit(c)
    assert abs(sv.norm() - 1) < 1e-10


def test_flux_conserved_at_generic_jt():
    lat = build_patch("hex1")
    sv = StateVector(6).apply_circuit(flux_free_prep(lat))
    sv.apply_circuit(floquet_drive(lat, DriveParams(jt=0.9), 3))
    assert abs(sv.expectation(lat.flux_string(0)) - 1) < 1e-12


def test_qubit_cap():
    with pytest.raises(QubitCapError):
        StateVector(25)
    StateVector(25, cap=25)


def test_readout_only_z_estimate():
    """Readout flips on |0>: <Z> ~ 1 - 2*0.004 within 3 sigma."""
    c = Circuit(1)
    noise = NoiseModel(readout_p10=0.004)
    plan = MeasurementPlan(basis_change=Circuit(1), observables={"z0": (1, (0,))})
    n_traj = 20000
    res = run_trajectories(c, noise, n_traj, seed=3, plan=plan)
    mean, sem = res["z0"]
    expect = 1 - 2 * 0.004
    sigma = math.sqrt(1 - expect**2) / math.sqrt(n_traj)
    assert abs(mean - expect) < 3 * max(sigma, sem)


def test_depolarizing_drives_to_zero():
    """Uniform non-identity Pauli mixing shrinks two-qubit correlations by
    -1/15 per application; a few layers drive them to zero within 3 sigma."""
    c = Circuit(2)
    c.append(hadamard(0))
    c.append(hadamard(1))
    c.append(cphase(0, 1, -math.pi))
    c.append(cphase(0, 1, -math.pi))
    c.append(cphase(0, 1, -math.pi))
    c.append(hadamard(1))
    noise = NoiseModel(p_depol=1.0)
    obs = {"zz": PauliString({0: "Z", 1: "Z"})}
    n_traj = 10000
    res = run_trajectories(c, noise, n_traj, seed=9, observables=obs)
    mean, sem = res["zz"]
    assert abs(mean) < abs(1 / 15.0) + 3 * max(sem, 1.0 / math.sqrt(n_traj))


def test_zero_noise_trajectories_exact():
    lat = build_patch("hex1")
    prep = flux_free_prep(lat)
    obs = {"w": lat.flux_string(0)}
    res = run_trajectories(prep, NoiseModel(), 50, seed=1, observables=obs)
    mean, sem = res["w"]
    assert abs(mean - 1.0) < 1e-10 and sem < 1e-10


def test_trajectory_determinism():
    c = Circuit(2)
    c.append(hadamard(0))
    c.append(cphase(0, 1, -math.pi))
    noise = NoiseModel(p_depol=0.2)
    obs = {"z": PauliString.single(1, "Z")}
    a = run_trajectories(c, noise, 200, seed=5, observables=obs)
    b = run_trajectories(c, noise, 200, seed=5, observables=obs)
    assert a == b


def test_amplitude_damping_decay():
    """Per-cycle damping pulls an excited ancilla toward |0>."""
    n_cycles = 10
    c = Circuit(1)
    c.append(rot(0, "x", math.pi))  # |1>
    c.meta["cycle_marks"] = []
    for _ in range(n_cycles):
        c.append(rot(0, "z", 0.0))
        c.meta["cycle_marks"].append(len(c.gates))
    noise = NoiseModel(gamma=0.2, damped_sites=(0,))
    obs = {"z": PauliString.single(0, "Z")}
    res = run_trajectories(c, noise, 4000, seed=2, observables=obs)
    mean, _ = res["z"]
    expect = -(2 * (1 - 0.2) ** n_cycles - 1)
    assert abs(mean - expect) < 0.06


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(p_depol=1.5)
    with pytest.raises(ValueError):
        NoiseModel(gamma=-0.1)
