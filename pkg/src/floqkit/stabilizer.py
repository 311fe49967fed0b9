"""Exact Clifford engine: destabilizer/stabilizer tableau with sign tracking.

Provides tableau evolution, exact Pauli expectations, Heisenberg propagation
of Pauli strings, Born-rule shot sampling, stabilizer-state entanglement
entropy, and synthesis of a preparation circuit from a commuting generator
set (used by the flux-free state builder).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .circuits import Circuit, Gate, cphase, hadamard, phase_s, rot
from .lattice import PauliString

_HALF_PI = math.pi / 2


class NonCliffordError(ValueError):
    pass


# -- elementary decomposition ----------------------------------------------

_ROTZ_ELEMS = {0: (), 1: ("s",), 2: ("pz",), 3: ("sdg",)}
_INVERSE = {"h": "h", "s": "sdg", "sdg": "s", "px": "px", "py": "py", "pz": "pz",
            "cz": "cz", "cx": "cx"}


def _snap_quarter_turns(angle: float, what: str) -> int:
    k = round(angle / _HALF_PI)
    if abs(angle - k * _HALF_PI) > 1e-12:
        raise NonCliffordError(f"non-Clifford angle: {what} at {angle} rad")
    return k % 4


def gate_elementaries(gate: Gate) -> list:
    """Decompose a Clifford gate into (name, qubits...) elementary ops."""
    if gate.kind == "h":
        return [("h", gate.targets[0])]
    if gate.kind == "s":
        return [("s", gate.targets[0])]
    if gate.kind == "rot":
        q = gate.targets[0]
        k = _snap_quarter_turns(gate.angle, f"rot1({gate.axis})")
        core = [(name, q) for name in _ROTZ_ELEMS[k]]
        if gate.axis == "z":
            return core
        if gate.axis == "x":
            return [("h", q)] + core + [("h", q)]
        return [("sdg", q), ("h", q)] + core + [("h", q), ("s", q)]
    if gate.kind == "cphase":
        a, b = gate.targets
        k = _snap_quarter_turns(gate.angle, "cphase") % 4
        if k != 2:
            raise NonCliffordError(f"non-Clifford angle: cphase at {gate.angle} rad")
        return [("cz", a, b)]
    if gate.kind == "cpauli":
        control = gate.targets[0]
        elems = []
        for site, letter in sorted(gate.string.letters.items()):
            if letter == "X":
                elems.append(("cx", control, site))
            elif letter == "Y":
                elems += [("sdg", site), ("cx", control, site), ("s", site)]
            else:
                elems.append(("cz", control, site))
        if gate.string.phase == -1:
            elems.append(("pz", control))
        return elems
    if gate.kind == "measure":
        raise NonCliffordError("measure gates are handled by shot sampling, not apply()")
    raise NonCliffordError(f"unknown gate kind {gate.kind!r}")


class Tableau:
    """n-qubit stabilizer state. Rows 0..n-1 destabilizers, n..2n-1 stabilizers."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("tableau needs at least one qubit")
        self.n = n
        self.x = np.zeros((2 * n, n), dtype=np.uint8)
        self.z = np.zeros((2 * n, n), dtype=np.uint8)
        self.r = np.zeros(2 * n, dtype=np.uint8)  # sign bit: (-1)**r
        self.x[np.arange(n), np.arange(n)] = 1
        self.z[np.arange(n, 2 * n), np.arange(n)] = 1

    def copy(self) -> "Tableau":
        out = Tableau.__new__(Tableau)
        out.n = self.n
        out.x = self.x.copy()
        out.z = self.z.copy()
        out.r = self.r.copy()
        return out

    # -- elementary conjugations (state evolution: rows <- U row U^dag) ----

    def _h(self, q):
        self.r ^= self.x[:, q] & self.z[:, q]
        self.x[:, q], self.z[:, q] = self.z[:, q].copy(), self.x[:, q].copy()

    def _s(self, q):
        self.r ^= self.x[:, q] & self.z[:, q]
        self.z[:, q] ^= self.x[:, q]

    def _sdg(self, q):
        self.r ^= self.x[:, q] & (1 ^ self.z[:, q])
        self.z[:, q] ^= self.x[:, q]

    def _px(self, q):
        self.r ^= self.z[:, q]

    def _py(self, q):
        self.r ^= self.x[:, q] ^ self.z[:, q]

    def _pz(self, q):
        self.r ^= self.x[:, q]

    def _cz(self, a, b):
        self.r ^= self.x[:, a] & self.x[:, b] & (self.z[:, a] ^ self.z[:, b])
        self.z[:, a] ^= self.x[:, b]
        self.z[:, b] ^= self.x[:, a]

    def _cx(self, c, t):
        self.r ^= self.x[:, c] & self.z[:, t] & (self.x[:, t] ^ self.z[:, c] ^ 1)
        self.x[:, t] ^= self.x[:, c]
        self.z[:, c] ^= self.z[:, t]

    def _elem(self, op):
        name = op[0]
        if name in ("cz", "cx"):
            getattr(self, "_" + name)(op[1], op[2])
        else:
            getattr(self, "_" + name)(op[1])

    def apply(self, c: Circuit) -> "Tableau":
        for gate in c.gates:
            for op in gate_elementaries(gate):
                self._elem(op)
        return self

    # -- rowsum (Aaronson-Gottesman) ---------------------------------------

    @staticmethod
    def _g(x1, z1, x2, z2):
        """Exponent of i when multiplying single-site Paulis, vectorized."""
        out = np.zeros_like(x1, dtype=np.int64)
        on = (x1 == 1) & (z1 == 1)
        out[on] = (z2[on].astype(np.int64) - x2[on])
        on = (x1 == 1) & (z1 == 0)
        out[on] = z2[on].astype(np.int64) * (2 * x2[on].astype(np.int64) - 1)
        on = (x1 == 0) & (z1 == 1)
        out[on] = x2[on].astype(np.int64) * (1 - 2 * z2[on].astype(np.int64))
        return out

    def _rowsum(self, h: int, i: int):
        phase = 2 * self.r[h] + 2 * self.r[i] + self._g(
            self.x[i], self.z[i], self.x[h], self.z[h]
        ).sum()
        if phase % 4 == 2:
            self.r[h] = 1
        elif phase % 4 == 0:
            self.r[h] = 0
        else:  # pragma: no cover
            raise AssertionError("anti-Hermitian rowsum")
        self.x[h] ^= self.x[i]
        self.z[h] ^= self.z[i]

    # -- measurement --------------------------------------------------------

    def measure(self, q: int, rng: np.random.Generator) -> int:
        n = self.n
        stab_x = self.x[n:, q]
        hits = np.nonzero(stab_x)[0]
        if hits.size:
            p = int(hits[0]) + n
            for i in np.nonzero(self.x[:, q])[0]:
                if i != p and i != p - n:
                    self._rowsum(int(i), p)
            self.x[p - n] = self.x[p]
            self.z[p - n] = self.z[p]
            self.r[p - n] = self.r[p]
            self.x[p] = 0
            self.z[p] = 0
            self.z[p, q] = 1
            outcome = int(rng.integers(2))
            self.r[p] = outcome
            return outcome
        # deterministic: accumulate product of stabilizers flagged by destabilizers
        acc_x = np.zeros(n, dtype=np.uint8)
        acc_z = np.zeros(n, dtype=np.uint8)
        phase = 0
        for i in np.nonzero(self.x[:n, q])[0]:
            s = int(i) + n
            phase += 2 * self.r[s] + self._g(self.x[s], self.z[s], acc_x, acc_z).sum()
            acc_x ^= self.x[s]
            acc_z ^= self.z[s]
        return 1 if phase % 4 == 2 else 0

    # -- expectations --------------------------------------------------------

    def pauli_expectation(self, p: PauliString) -> int:
        if not p.hermitian:
            raise ValueError("expectation of a non-Hermitian string")
        n = self.n
        px = np.zeros(n, dtype=np.uint8)
        pz = np.zeros(n, dtype=np.uint8)
        for site, letter in p.letters.items():
            if site >= n:
                raise ValueError(f"string site {site} outside tableau")
            if letter in ("X", "Y"):
                px[site] = 1
            if letter in ("Z", "Y"):
                pz[site] = 1
        # anticommutation with any stabilizer -> 0
        anti = ((self.x[n:] & pz) ^ (self.z[n:] & px)).sum(axis=1) % 2
        if anti.any():
            return 0
        # select generators via destabilizer anticommutation
        sel = ((self.x[:n] & pz) ^ (self.z[:n] & px)).sum(axis=1) % 2
        acc_x = np.zeros(n, dtype=np.uint8)
        acc_z = np.zeros(n, dtype=np.uint8)
        phase = 0
        for i in np.nonzero(sel)[0]:
            s = int(i) + n
            phase += 2 * self.r[s] + self._g(self.x[s], self.z[s], acc_x, acc_z).sum()
            acc_x ^= self.x[s]
            acc_z ^= self.z[s]
        if not (np.array_equal(acc_x, px) and np.array_equal(acc_z, pz)):
            raise AssertionError("commuting string is not in the stabilizer group")
        # rows represent Hermitian Paulis (the (1,1) bit pair is a proper Y),
        # so the accumulated i**phase is directly the product sign
        prod_phase = 1j ** (phase % 4)
        want = p.phase
        if prod_phase == want:
            return 1
        if prod_phase == -want:
            return -1
        raise AssertionError("stabilizer product phase is not +-1")  # pragma: no cover

    # -- entropy --------------------------------------------------------------

    def entanglement_entropy(self, region: Iterable[int]) -> float:
        """Entropy of the reduced state on ``region`` in units of log 2."""
        region = sorted(set(region))
        if not region:
            return 0.0
        n = self.n
        cols = np.concatenate([self.x[n:][:, region], self.z[n:][:, region]], axis=1)
        return float(_gf2_rank(cols) - len(region)) * math.log(2)


def _gf2_rank(mat: np.ndarray) -> int:
    m = mat.copy().astype(np.uint8)
    rank = 0
    rows, cols = m.shape
    for c in range(cols):
        pivots = np.nonzero(m[rank:, c])[0]
        if pivots.size == 0:
            continue
        p = rank + int(pivots[0])
        m[[rank, p]] = m[[p, rank]]
        hit = np.nonzero(m[:, c])[0]
        hit = hit[hit != rank]
        m[hit] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def new_tableau(n: int) -> Tableau:
    return Tableau(n)


def apply(t: Tableau, c: Circuit) -> Tableau:
    """Conjugate a copy of the tableau by the circuit."""
    return t.copy().apply(c)


def pauli_expectation(t: Tableau, p: PauliString) -> int:
    return t.pauli_expectation(p)


def entanglement_entropy(t: Tableau, region: Iterable[int]) -> float:
    return t.entanglement_entropy(region)


# -- Heisenberg propagation -------------------------------------------------


def _conj_elem_vec(op, x, z, phase4):
    """In-place g P g^dag on a Pauli bit vector; returns updated phase4."""
    name = op[0]
    if name == "h":
        q = op[1]
        if x[q] & z[q]:
            phase4 += 2
        x[q], z[q] = z[q], x[q]
    elif name == "s":
        q = op[1]
        if x[q] & z[q]:
            phase4 += 2
        z[q] ^= x[q]
    elif name == "sdg":
        q = op[1]
        if x[q] & (1 ^ z[q]):
            phase4 += 2
        z[q] ^= x[q]
    elif name == "px":
        q = op[1]
        if z[q]:
            phase4 += 2
    elif name == "py":
        q = op[1]
        if x[q] ^ z[q]:
            phase4 += 2
    elif name == "pz":
        q = op[1]
        if x[q]:
            phase4 += 2
    elif name == "cz":
        a, b = op[1], op[2]
        if x[a] & x[b] & (z[a] ^ z[b]):
            phase4 += 2
        z[a] ^= x[b]
        z[b] ^= x[a]
    elif name == "cx":
        c, t = op[1], op[2]
        if x[c] & z[t] & (x[t] ^ z[c] ^ 1):
            phase4 += 2
        x[t] ^= x[c]
        z[c] ^= z[t]
    else:  # pragma: no cover
        raise AssertionError(name)
    return phase4 % 4


def conjugate_string(p: PauliString, c: Circuit) -> PauliString:
    """Heisenberg propagation: returns c^dag P c as a Pauli string."""
    if not c.gates:
        return p
    n = c.n
    x = np.zeros(n, dtype=np.uint8)
    z = np.zeros(n, dtype=np.uint8)
    for site, letter in p.letters.items():
        if letter in ("X", "Y"):
            x[site] = 1
        if letter in ("Z", "Y"):
            z[site] = 1
    phase4 = {1: 0, 1j: 1, -1: 2, -1j: 3}[p.phase]
    elems = []
    for gate in c.gates:
        elems.extend(gate_elementaries(gate))
    for op in reversed(elems):
        inv = (_INVERSE[op[0]],) + op[1:]
        phase4 = _conj_elem_vec(inv, x, z, phase4)
    letters = {}
    for q in np.nonzero(x | z)[0]:
        q = int(q)
        if x[q] and z[q]:
            letters[q] = "Y"
        elif x[q]:
            letters[q] = "X"
        else:
            letters[q] = "Z"
    return PauliString(letters, 1j**phase4)


# -- shot sampling ------------------------------------------------------------


@dataclass
class ShotTable:
    """Sampled bitstrings with realization keys.

    ``bits[i, k]`` is the outcome of measured qubit ``qubits[k]`` in shot i.
    """

    qubits: tuple
    bits: np.ndarray  # (shots, len(qubits)) uint8
    twirl: np.ndarray  # (shots,) int
    disorder: np.ndarray
    trajectory: np.ndarray
    plan: Optional[object] = None

    @property
    def n_rows(self) -> int:
        return self.bits.shape[0]


def sample_shots(
    t: Tableau,
    basis_change: Circuit,
    qubits: Sequence[int],
    shots: int,
    seed: int,
    twirl_id: int = 0,
    disorder_id: int = 0,
) -> ShotTable:
    """Measure ``qubits`` in the computational basis after ``basis_change``,
    with exact Born statistics; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    base = t.copy().apply(basis_change)
    qubits = tuple(qubits)
    bits = np.empty((shots, len(qubits)), dtype=np.uint8)
    for s in range(shots):
        work = base.copy()
        for k, q in enumerate(qubits):
            bits[s, k] = work.measure(q, rng)
    const = np.full(shots, 0, dtype=np.int64)
    return ShotTable(
        qubits=qubits,
        bits=bits,
        twirl=const + twirl_id,
        disorder=const + disorder_id,
        trajectory=np.arange(shots, dtype=np.int64),
    )


# -- stabilizer circuit synthesis ---------------------------------------------


def synthesize_stabilizer_circuit(generators: Sequence[PauliString], n: int) -> Circuit:
    """Clifford circuit preparing, from |0..0>, the joint +1 eigenstate of the
    given commuting, independent, Hermitian generators (k <= n of them).

    Remaining degrees of freedom are completed deterministically by the
    reduction itself.
    """
    k = len(generators)
    if k > n:
        raise ValueError("more generators than qubits")
    rows_x = np.zeros((k, n), dtype=np.uint8)
    rows_z = np.zeros((k, n), dtype=np.uint8)
    phase4 = np.zeros(k, dtype=np.int64)
    for i, g in enumerate(generators):
        if not g.hermitian:
            raise ValueError(f"generator {i} is not Hermitian")
        for site, letter in g.letters.items():
            if site >= n:
                raise ValueError(f"generator {i} touches site {site} >= n")
            if letter in ("X", "Y"):
                rows_x[i, site] = 1
            if letter in ("Z", "Y"):
                rows_z[i, site] = 1
        phase4[i] = {1: 0, -1: 2}[g.phase]
    for i in range(k):
        for j in range(i + 1, k):
            overlap = int(((rows_x[i] & rows_z[j]) ^ (rows_z[i] & rows_x[j])).sum()) % 2
            if overlap:
                raise ValueError(f"generators {i} and {j} anticommute")

    ops = []

    def do(op):
        ops.append(op)
        name = op[0]
        if name == "h":
            q = op[1]
            flip = rows_x[:, q] & rows_z[:, q]
            phase4[:] = (phase4 + 2 * flip) % 4
            rows_x[:, q], rows_z[:, q] = rows_z[:, q].copy(), rows_x[:, q].copy()
        elif name == "s":
            q = op[1]
            flip = rows_x[:, q] & rows_z[:, q]
            phase4[:] = (phase4 + 2 * flip) % 4
            rows_z[:, q] ^= rows_x[:, q]
        elif name == "px":
            q = op[1]
            phase4[:] = (phase4 + 2 * rows_z[:, q]) % 4
        elif name == "cz":
            a, b = op[1], op[2]
            flip = rows_x[:, a] & rows_x[:, b] & (rows_z[:, a] ^ rows_z[:, b])
            phase4[:] = (phase4 + 2 * flip) % 4
            rows_z[:, a] ^= rows_x[:, b]
            rows_z[:, b] ^= rows_x[:, a]
        elif name == "cx":
            c, t = op[1], op[2]
            flip = rows_x[:, c] & rows_z[:, t] & (rows_x[:, t] ^ rows_z[:, c] ^ 1)
            phase4[:] = (phase4 + 2 * flip) % 4
            rows_x[:, t] ^= rows_x[:, c]
            rows_z[:, c] ^= rows_z[:, t]
        else:  # pragma: no cover
            raise AssertionError(name)

    def row_mul(i, j):
        """rows[i] <- rows[j] * rows[i] (group product with phase)."""
        extra = Tableau._g(rows_x[j], rows_z[j], rows_x[i], rows_z[i]).sum()
        phase4[i] = (phase4[i] + phase4[j] + extra) % 4
        rows_x[i] ^= rows_x[j]
        rows_z[i] ^= rows_z[j]

    for i in range(k):
        # clear Z content on locked columns via row operations
        for j in range(i):
            if rows_z[i, j] and not rows_x[i, j]:
                row_mul(i, j)
        if rows_x[i, :i].any():  # pragma: no cover - commutation forbids this
            raise AssertionError("X content on a locked column")
        xs = np.nonzero(rows_x[i])[0]
        if xs.size:
            for q in xs:
                if rows_z[i, q]:
                    do(("s", int(q)))
            pivot = int(xs[0])
            for q in xs[1:]:
                do(("cx", pivot, int(q)))
            for q in np.nonzero(rows_z[i])[0]:
                q = int(q)
                if q != pivot and q >= i:
                    do(("cz", pivot, q))
                elif q != pivot and q < i:  # pragma: no cover
                    raise AssertionError("Z content reappeared on locked column")
            do(("h", pivot))
        else:
            zs = [int(q) for q in np.nonzero(rows_z[i])[0] if q >= i]
            if not zs:
                raise ValueError(f"generator {i} is dependent on earlier generators")
            pivot = zs[0]
            for q in zs[1:]:
                do(("cx", q, pivot))
        if pivot != i:
            do(("cx", pivot, i))
            do(("cx", i, pivot))
            do(("cx", pivot, i))
        if phase4[i] % 4 == 2:
            do(("px", i))
        elif phase4[i] % 4 != 0:  # pragma: no cover
            raise AssertionError("generator reduced to anti-Hermitian row")

    # prep circuit = inverse of the recorded reduction
    prep = Circuit(n)
    for op in reversed(ops):
        name = op[0]
        if name == "h":
            prep.append(hadamard(op[1]))
        elif name == "s":
            prep.append(rot(op[1], "z", -_HALF_PI))
        elif name == "px":
            prep.append(rot(op[1], "x", math.pi))
        elif name == "cz":
            prep.append(cphase(op[1], op[2], -math.pi))
        elif name == "cx":
            prep.append(hadamard(op[2]))
            prep.append(cphase(op[1], op[2], -math.pi))
            prep.append(hadamard(op[2]))
    return prep
