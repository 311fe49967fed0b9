import itertools

import numpy as np
import pytest

from floqkit.lattice import PauliString, pauli_commutes, pauli_mul

from conftest import PAULI_MATS, pauli_matrix


def test_single_site_products():
    x0 = PauliString.single(0, "X")
    y0 = PauliString.single(0, "Y")
    assert x0 * y0 == PauliString.single(0, "Z", 1j)
    assert y0 * x0 == PauliString.single(0, "Z", -1j)


def test_hermitian_involution():
    p = PauliString({0: "X", 1: "Z", 3: "Y"}, -1)
    assert (p * p) == PauliString.identity()


def test_phase_validation():
    with pytest.raises(ValueError):
        PauliString({0: "X"}, 0.5)
    with pytest.raises(ValueError):
        PauliString({0: "Q"})


def test_two_qubit_products_exhaustive():
    """All 256 signed two-qubit products against the 4x4 matrix algebra."""
    letters = ["I", "X", "Y", "Z"]
    for a1, a2, b1, b2 in itertools.product(letters, repeat=4):
        pa = PauliString({0: a1, 1: a2})
        pb = PauliString({0: b1, 1: b2})
        prod = pauli_mul(pa, pb)
        lhs = pauli_matrix(pa, 2) @ pauli_matrix(pb, 2)
        assert np.allclose(lhs, pauli_matrix(prod, 2), atol=1e-12)


def test_xz_zx_example():
    p = PauliString({0: "X", 1: "Z"}) * PauliString({0: "Z", 1: "X"})
    lhs = pauli_matrix(PauliString({0: "X", 1: "Z"}), 2) @ pauli_matrix(
        PauliString({0: "Z", 1: "X"}), 2
    )
    assert np.allclose(lhs, pauli_matrix(p, 2))
    assert p.letters == {0: "Y", 1: "Y"}


def test_commutation():
    assert pauli_commutes(PauliString.single(0, "X"), PauliString.single(1, "Z"))
    assert not pauli_commutes(PauliString.single(0, "X"), PauliString.single(0, "Z"))
    # commute iff matrices commute, random sample
    rng = np.random.default_rng(3)
    for _ in range(50):
        from conftest import random_pauli

        a, b = random_pauli(3, rng), random_pauli(3, rng)
        ma, mb = pauli_matrix(a, 3), pauli_matrix(b, 3)
        assert pauli_commutes(a, b) == np.allclose(ma @ mb, mb @ ma)


def test_mul_associative(rng):
    from conftest import random_pauli

    for _ in range(30):
        a, b, c = (random_pauli(4, rng, hermitian=False) for _ in range(3))
        assert (a * b) * c == a * (b * c)
