import math

import numpy as np
import pytest

from floqkit.circuits import Circuit, cphase, hadamard, phase_s, rot
from floqkit.dense import StateVector
from floqkit.lattice import PauliString

PAULI_MATS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_matrix(p: PauliString, n: int) -> np.ndarray:
    out = np.array([[p.phase]], dtype=complex)
    for q in range(n):
        out = np.kron(out, PAULI_MATS[p.letter(q)])
    return out


def circuit_unitary(c: Circuit, n: int) -> np.ndarray:
    u = np.zeros((2**n, 2**n), dtype=complex)
    for b in range(2**n):
        sv = StateVector(n)
        sv.psi[:] = 0
        sv.psi[b] = 1
        sv.apply_circuit(c)
        u[:, b] = sv.psi
    return u


def random_clifford_circuit(n, depth, rng, with_cpauli=False):
    c = Circuit(n)
    kinds = 5 if with_cpauli else 4
    for _ in range(depth):
        k = rng.integers(kinds)
        if k == 0:
            c.append(hadamard(int(rng.integers(n))))
        elif k == 1:
            c.append(phase_s(int(rng.integers(n))))
        elif k == 2 and n >= 2:
            a, b = rng.choice(n, 2, replace=False)
            c.append(cphase(int(a), int(b), -math.pi))
        elif k == 3:
            c.append(
                rot(int(rng.integers(n)), "xyz"[rng.integers(3)], math.pi / 2 * int(rng.integers(1, 4)))
            )
        else:
            from floqkit.circuits import cpauli

            ctrl = int(rng.integers(n))
            letters = {}
            for q in range(n):
                if q == ctrl:
                    continue
                letter = "IXYZ"[rng.integers(4)]
                if letter != "I":
                    letters[q] = letter
            if letters:
                c.append(cpauli(ctrl, PauliString(letters, 1 if rng.integers(2) else -1)))
    return c


def random_pauli(n, rng, hermitian=True):
    letters = {}
    for q in range(n):
        letter = "IXYZ"[rng.integers(4)]
        if letter != "I":
            letters[q] = letter
    phases = (1, -1) if hermitian else (1, -1, 1j, -1j)
    return PauliString(letters, phases[rng.integers(len(phases))])


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
