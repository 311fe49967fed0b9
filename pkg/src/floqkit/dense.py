"""Dense statevector engine with quantum-trajectory noise.

The only engine valid for disordered (non-Clifford, interacting) drives and
the oracle every other engine is checked against on small instances.  Qubit
``q`` is tensor axis ``q`` of the amplitude array reshaped to (2,)*n; bit
``q`` of a sampled integer outcome is ``(value >> (n-1-q)) & 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .circuits import Circuit, Gate
from .lattice import PauliString

DEFAULT_QUBIT_CAP = 24

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

_TWO_QUBIT_PAULIS = [(a, b) for a in "IXYZ" for b in "IXYZ"][1:]  # 15 non-identity


class QubitCapError(RuntimeError):
    pass


def _rot_matrix(axis: str, angle: float) -> np.ndarray:
    half = angle / 2.0
    return math.cos(half) * _PAULI["I"] - 1j * math.sin(half) * _PAULI[axis.upper()]


class StateVector:
    """2**n complex amplitudes, kept normalized to 1 within 1e-10."""

    def __init__(self, n: int, cap: int = DEFAULT_QUBIT_CAP):
        if n < 1:
            raise ValueError("need at least one qubit")
        if n > cap:
            raise QubitCapError(f"{n} qubits exceeds the dense cap of {cap}")
        self.n = n
        self.psi = np.zeros(2**n, dtype=complex)
        self.psi[0] = 1.0

    def copy(self) -> "StateVector":
        out = StateVector.__new__(StateVector)
        out.n = self.n
        out.psi = self.psi.copy()
        return out

    # -- gate application -------------------------------------------------

    def _apply_1q(self, mat: np.ndarray, q: int):
        psi = self.psi.reshape(2**q, 2, -1)
        if mat[0, 1] == 0 and mat[1, 0] == 0:
            psi[:, 0, :] *= mat[0, 0]
            psi[:, 1, :] *= mat[1, 1]
            return
        a0 = psi[:, 0, :].copy()
        a1 = psi[:, 1, :]
        psi[:, 0, :] = mat[0, 0] * a0 + mat[0, 1] * a1
        psi[:, 1, :] = mat[1, 0] * a0 + mat[1, 1] * a1

    def _apply_string(self, string: PauliString, view: np.ndarray, axis_of: dict):
        """Apply a Pauli string to an arbitrary tensor view in place-ish."""
        out = view
        for site, letter in sorted(string.letters.items()):
            out = np.tensordot(_PAULI[letter], out, axes=([1], [axis_of[site]]))
            out = np.moveaxis(out, 0, axis_of[site])
        return string.phase * out

    def apply_gate(self, gate: Gate):
        if gate.kind == "rot":
            self._apply_1q(_rot_matrix(gate.axis, gate.angle), gate.targets[0])
        elif gate.kind == "h":
            self._apply_1q(_H, gate.targets[0])
        elif gate.kind == "s":
            self._apply_1q(_S, gate.targets[0])
        elif gate.kind == "cphase":
            a, b = gate.targets
            psi = self.psi.reshape([2] * self.n)
            sl = [slice(None)] * self.n
            sl[a] = 1
            sl[b] = 1
            psi[tuple(sl)] *= np.exp(1j * gate.angle)
        elif gate.kind == "cpauli":
            control = gate.targets[0]
            psi = self.psi.reshape([2] * self.n)
            sl = [slice(None)] * self.n
            sl[control] = 1
            axis_of = {s: (s if s < control else s - 1) for s in gate.string.letters}
            psi[tuple(sl)] = self._apply_string(gate.string, psi[tuple(sl)], axis_of)
        elif gate.kind == "measure":
            raise ValueError("measure gates are handled by sampling, not apply_circuit")
        else:
            raise ValueError(f"unknown gate kind {gate.kind!r}")

    def apply_circuit(self, c: Circuit):
        if c.n > self.n:
            raise ValueError("circuit acts on more qubits than the state holds")
        for g in c.gates:
            self.apply_gate(g)
        return self

    def apply_pauli(self, p: PauliString):
        psi = self.psi.reshape([2] * self.n)
        axis_of = {s: s for s in p.letters}
        self.psi = np.asarray(self._apply_string(p, psi, axis_of)).reshape(-1)
        return self

    # -- readout ----------------------------------------------------------

    def norm(self) -> float:
        return float(np.linalg.norm(self.psi))

    def expectation(self, p: PauliString) -> float:
        if not p.hermitian:
            raise ValueError("expectation of a non-Hermitian string")
        bra = self.psi
        ket = self.copy().apply_pauli(p).psi
        val = np.vdot(bra, ket)
        if abs(val.imag) > 1e-10:
            raise AssertionError(f"Hermitian expectation came out complex: {val}")
        return float(val.real)

    def overlap(self, other: "StateVector") -> complex:
        return complex(np.vdot(self.psi, other.psi))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def sample_bits(self, shots: int, rng: np.random.Generator) -> np.ndarray:
        """(shots, n) array of measured bits in the computational basis."""
        probs = self.probabilities()
        probs = probs / probs.sum()
        cum = np.cumsum(probs)
        draws = np.searchsorted(cum, rng.random(shots), side="right")
        bits = (draws[:, None] >> np.arange(self.n - 1, -1, -1)) & 1
        return bits.astype(np.uint8)

    def bit_probability(self, q: int) -> float:
        psi = self.psi.reshape([2] * self.n)
        sl = [slice(None)] * self.n
        sl[q] = 1
        return float(np.sum(np.abs(psi[tuple(sl)]) ** 2))

    def entanglement_entropy(self, region: Iterable[int]) -> float:
        """von Neumann entropy of the region, in units of log 2."""
        region = sorted(set(region))
        rest = [q for q in range(self.n) if q not in region]
        psi = self.psi.reshape([2] * self.n)
        mat = np.transpose(psi, region + rest).reshape(2 ** len(region), -1)
        svals = np.linalg.svd(mat, compute_uv=False)
        lam = svals**2
        lam = lam[lam > 1e-14]
        return float(-(lam * np.log2(lam)).sum())


def apply_circuit(psi: StateVector, c: Circuit) -> StateVector:
    return psi.copy().apply_circuit(c)


def expectation(psi: StateVector, p: PauliString) -> float:
    return psi.expectation(p)


# -- noise ----------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Two-qubit depolarizing after each cphase, per-cycle amplitude damping
    on designated qubits, and asymmetric readout flips."""

    p_depol: float = 0.0
    p_depol_per_bond: dict = field(default_factory=dict)  # (a, b) -> p
    gamma: float = 0.0
    damped_sites: tuple = ()
    readout_p10: float = 0.0  # p(read 1 | prepared 0)
    readout_p01: float = 0.0  # p(read 0 | prepared 1)

    def __post_init__(self):
        probs = [self.p_depol, self.gamma, self.readout_p10, self.readout_p01]
        probs += list(self.p_depol_per_bond.values())
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")

    @property
    def silent(self) -> bool:
        return (
            self.p_depol == 0
            and not self.p_depol_per_bond
            and self.gamma == 0
            and self.readout_p10 == 0
            and self.readout_p01 == 0
        )


@dataclass(frozen=True)
class MeasurementPlan:
    """Basis-change circuit plus named bit-product decoders.

    Decoders map a bit row to +/-1: ``value = sign * prod (1 - 2 b[q])`` over
    the decoder's qubits.
    """

    basis_change: Circuit
    observables: dict  # name -> (sign, tuple of qubits)


def _depol_pair(sv: StateVector, a: int, b: int, rng: np.random.Generator, p: float):
    if p <= 0 or rng.random() >= p:
        return
    pa, pb = _TWO_QUBIT_PAULIS[rng.integers(15)]
    if pa != "I":
        sv._apply_1q(_PAULI[pa], a)
    if pb != "I":
        sv._apply_1q(_PAULI[pb], b)


def _amplitude_damp(sv: StateVector, q: int, gamma: float, rng: np.random.Generator):
    if gamma <= 0:
        return
    p1 = sv.bit_probability(q)
    if rng.random() < gamma * p1:
        # jump: |1> -> |0>
        psi = sv.psi.reshape([2] * sv.n)
        sl0 = [slice(None)] * sv.n
        sl1 = [slice(None)] * sv.n
        sl0[q], sl1[q] = 0, 1
        psi[tuple(sl0)] = psi[tuple(sl1)]
        psi[tuple(sl1)] = 0.0
    else:
        psi = sv.psi.reshape([2] * sv.n)
        sl1 = [slice(None)] * sv.n
        sl1[q] = 1
        psi[tuple(sl1)] *= math.sqrt(1.0 - gamma)
    sv.psi /= np.linalg.norm(sv.psi)


def _run_single_trajectory(
    circuit: Circuit, noise: NoiseModel, n: int, rng: np.random.Generator
) -> StateVector:
    sv = StateVector(n)
    marks = list(circuit.meta.get("cycle_marks", []))
    next_mark = 0
    for idx, gate in enumerate(circuit.gates):
        sv.apply_gate(gate)
        if gate.kind == "cphase":
            a, b = gate.targets
            p = noise.p_depol_per_bond.get((a, b), noise.p_depol_per_bond.get((b, a), noise.p_depol))
            _depol_pair(sv, a, b, rng, p)
        while next_mark < len(marks) and idx + 1 == marks[next_mark]:
            for q in noise.damped_sites:
                _amplitude_damp(sv, q, noise.gamma, rng)
            next_mark += 1
    return sv


def run_trajectories(
    circuit: Circuit,
    noise: NoiseModel,
    n_traj: int,
    seed: int,
    observables: Optional[dict] = None,
    plan: Optional[MeasurementPlan] = None,
) -> dict:
    """Average observables over stochastic trajectories.

    Exactly one of ``observables`` (name -> PauliString, exact expectations
    per trajectory, no readout error) or ``plan`` (sampled one shot per
    trajectory with readout flips) must be given.  Returns
    ``{name: (mean, standard_error)}``; deterministic for a given seed.
    """
    if (observables is None) == (plan is None):
        raise ValueError("pass exactly one of observables / plan")
    names = sorted(observables) if observables is not None else sorted(plan.observables)
    acc = {name: np.empty(n_traj) for name in names}
    for t in range(n_traj):
        rng = np.random.default_rng((seed, t))
        sv = _run_single_trajectory(circuit, noise, circuit.n, rng)
        if observables is not None:
            for name in names:
                acc[name][t] = sv.expectation(observables[name])
        else:
            sv.apply_circuit(plan.basis_change)
            bits = sv.sample_bits(1, rng)[0]
            if noise.readout_p10 or noise.readout_p01:
                flips0 = rng.random(sv.n) < noise.readout_p10
                flips1 = rng.random(sv.n) < noise.readout_p01
                bits = np.where(bits == 0, flips0.astype(np.uint8), (~flips1).astype(np.uint8))
            for name in names:
                sign, qubits = plan.observables[name]
                val = sign
                for q in qubits:
                    val *= 1 - 2 * int(bits[q])
                acc[name][t] = val
    out = {}
    for name in names:
        vals = acc[name]
        sem = float(vals.std(ddof=1) / math.sqrt(n_traj)) if n_traj > 1 else 0.0
        out[name] = (float(vals.mean()), sem)
    return out
