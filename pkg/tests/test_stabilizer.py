import math

import numpy as np
import pytest

from floqkit import stabilizer
from floqkit.circuits import Circuit, DriveParams, cphase, floquet_drive, hadamard
from floqkit.dense import StateVector
from floqkit.lattice import PauliString, build_patch
from floqkit.protocols import center_plaquette, diagonal_pair, flux_free_prep
from floqkit.stabilizer import NonCliffordError, Tableau, conjugate_string, sample_shots

from conftest import circuit_unitary, pauli_matrix, random_clifford_circuit, random_pauli


def test_new_tableau():
    t = Tableau(3)
    for q in range(3):
        assert t.pauli_expectation(PauliString.single(q, "Z")) == 1
        assert t.pauli_expectation(PauliString.single(q, "X")) == 0
    with pytest.raises(ValueError):
        Tableau(0)


def test_h_on_zero():
    t = Tableau(1).apply(Circuit(1).append(hadamard(0)))
    assert t.pauli_expectation(PauliString.single(0, "X")) == 1
    assert t.pauli_expectation(PauliString.single(0, "Z")) == 0


def test_non_clifford_rejected():
    lat = build_patch("hex1")
    c = floquet_drive(lat, DriveParams(jt=0.9), 1)
    with pytest.raises(NonCliffordError, match="non-Clifford angle"):
        Tableau(6).apply(c)
    with pytest.raises(NonCliffordError, match="cphase"):
        Tableau(2).apply(Circuit(2).append(cphase(0, 1, -0.5)))


def test_against_dense_random_cliffords(rng):
    for _ in range(40):
        n = int(rng.integers(2, 7))
        c = random_clifford_circuit(n, 25, rng, with_cpauli=True)
        t = Tableau(n).apply(c)
        sv = StateVector(n).apply_circuit(c)
        for _ in range(10):
            p = random_pauli(n, rng)
            assert abs(t.pauli_expectation(p) - sv.expectation(p)) < 1e-9


def test_flux_free_prep_ring1():
    lat = build_patch("ring1")
    n = max(s.id for s in lat.sites) + 1
    t = Tableau(n).apply(flux_free_prep(lat))
    for p in range(7):
        assert t.pauli_expectation(lat.flux_string(p)) == 1


def test_flux_conservation_ten_cycles():
    lat = build_patch("ring1")
    n = max(s.id for s in lat.sites) + 1
    t = Tableau(n).apply(flux_free_prep(lat))
    one = floquet_drive(lat, DriveParams(jt=1.0), 1)
    for _ in range(10):
        t.apply(one)
        assert all(t.pauli_expectation(lat.flux_string(p)) == 1 for p in range(7))


def test_conjugate_string_vs_dense(rng):
    for _ in range(25):
        n = int(rng.integers(2, 6))
        c = random_clifford_circuit(n, 15, rng, with_cpauli=True)
        p = random_pauli(n, rng, hermitian=False)
        q = conjugate_string(p, c)
        u = circuit_unitary(c, n)
        assert np.allclose(
            u.conj().T @ pauli_matrix(p, n) @ u, pauli_matrix(q, n), atol=1e-9
        )


def test_conjugate_group_action(rng):
    n = 5
    c1 = random_clifford_circuit(n, 12, rng)
    c2 = random_clifford_circuit(n, 12, rng)
    p = PauliString({0: "X", 2: "Z", 4: "Y"})
    both = Circuit(n)
    both.extend(c1)
    both.extend(c2)
    assert conjugate_string(conjugate_string(p, c2), c1) == conjugate_string(p, both)
    assert conjugate_string(p, Circuit(n)) == p


@pytest.mark.parametrize("geom", ["ring1", "ring3"])
def test_parity_transmutation_identity(geom):
    """One Floquet cycle maps the plaquette fermion parity to W_p times itself."""
    lat = build_patch(geom)
    pc = center_plaquette(lat)
    s0, s1, path = diagonal_pair(lat, pc)
    pf = -lat.fermion_density_string(s0, s1, path)
    one = floquet_drive(lat, DriveParams(jt=1.0), 1)
    w = lat.flux_string(pc)
    assert conjugate_string(pf, one) == w * pf
    # two cycles: back to P_F since W^2 = 1
    two = floquet_drive(lat, DriveParams(jt=1.0), 2)
    assert conjugate_string(pf, two) == pf


def test_sample_shots_statistics():
    t = Tableau(1).apply(Circuit(1).append(hadamard(0)))
    table = sample_shots(t, Circuit(1), [0], 100000, seed=7)
    freq = table.bits.mean()
    assert abs(freq - 0.5) < 3 * 0.5 / math.sqrt(100000)
    # deterministic outcome has zero variance
    t0 = Tableau(2)
    tab = sample_shots(t0, Circuit(2), [0, 1], 500, seed=1)
    assert not tab.bits.any()
    # repeated seed gives the identical table
    a = sample_shots(t, Circuit(1), [0], 1000, seed=9)
    b = sample_shots(t, Circuit(1), [0], 1000, seed=9)
    assert np.array_equal(a.bits, b.bits)


def test_entropy_basics():
    t = Tableau(3)
    assert t.entanglement_entropy([0, 1]) == 0.0
    bell = Circuit(2)
    bell.append(hadamard(0))
    bell.append(hadamard(1))
    bell.append(cphase(0, 1, -math.pi))
    bell.append(hadamard(1))
    t = Tableau(2).apply(bell)
    assert abs(t.entanglement_entropy([0]) - math.log(2)) < 1e-12


def test_entropy_vs_dense(rng):
    for _ in range(15):
        n = int(rng.integers(2, 7))
        c = random_clifford_circuit(n, 30, rng)
        t = Tableau(n).apply(c)
        sv = StateVector(n).apply_circuit(c)
        k = int(rng.integers(1, n))
        region = sorted(rng.choice(n, k, replace=False).tolist())
        s_tab = t.entanglement_entropy(region) / math.log(2)
        s_dense = sv.entanglement_entropy(region)
        assert abs(s_tab - s_dense) < 1e-9


def test_entropy_subadditive(rng):
    n = 6
    c = random_clifford_circuit(n, 40, rng)
    t = Tableau(n).apply(c)
    a, b = [0, 1], [3, 4]
    assert (
        t.entanglement_entropy(a + b)
        <= t.entanglement_entropy(a) + t.entanglement_entropy(b) + 1e-12
    )


def test_synthesis_rejects_bad_generators():
    with pytest.raises(ValueError, match="anticommute"):
        stabilizer.synthesize_stabilizer_circuit(
            [PauliString.single(0, "X"), PauliString.single(0, "Z")], 2
        )
    with pytest.raises(ValueError, match="dependent"):
        stabilizer.synthesize_stabilizer_circuit(
            [PauliString.single(0, "Z"), PauliString.single(0, "Z")], 2
        )
    with pytest.raises(ValueError, match="Hermitian"):
        stabilizer.synthesize_stabilizer_circuit([PauliString.single(0, "Z", 1j)], 1)
