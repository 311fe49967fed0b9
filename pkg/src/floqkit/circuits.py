"""Circuit IR and builders for every protocol of the driven honeycomb.

Gate kinds: ``rot`` (single-qubit rotation about x/y/z), ``h``, ``s``,
``cphase`` (symmetric controlled phase), ``cpauli`` (controlled Pauli string,
control in ``targets[0]``) and ``measure``.  Global phases are never tracked;
all circuit-level identities hold up to global phase.

Builders are pure functions; circuits are append-only while being built and
treated as immutable afterwards.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .lattice import Lattice, PauliString

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple
    axis: str = ""
    angle: float = 0.0
    string: Optional[PauliString] = None

    def support(self) -> tuple:
        if self.kind == "cpauli":
            return tuple(sorted(set(self.targets) | set(self.string.letters)))
        return tuple(sorted(set(self.targets)))


def rot(site: int, axis: str, angle: float) -> Gate:
    if axis not in ("x", "y", "z"):
        raise ValueError(f"rotation axis {axis!r}")
    if not math.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    return Gate("rot", (site,), axis=axis, angle=float(angle))


def hadamard(site: int) -> Gate:
    return Gate("h", (site,))


def phase_s(site: int) -> Gate:
    return Gate("s", (site,))


def cphase(a: int, b: int, angle: float) -> Gate:
    if not math.isfinite(angle):
        raise ValueError("cphase angle must be finite")
    return Gate("cphase", (a, b), angle=float(angle))


def cpauli(control: int, string: PauliString) -> Gate:
    if not string.hermitian:
        raise ValueError("controlled string must be Hermitian")
    if control in string.letters:
        raise ValueError("control collides with string support")
    return Gate("cpauli", (control,), string=string)


def measure(site: int, basis: str = "z") -> Gate:
    if basis not in ("x", "y", "z"):
        raise ValueError(f"measurement basis {basis!r}")
    return Gate("measure", (site,), axis=basis)


@dataclass
class Circuit:
    """Ordered gate list over ``n`` qubits with moment and cycle bookkeeping.

    ``moments`` are (start, stop) slices of gates with pairwise disjoint
    support; ``meta['cycle_marks']`` records the gate index reached after each
    Floquet cycle, which dynamical decoupling and per-cycle noise use.
    """

    n: int
    gates: list = field(default_factory=list)
    moments: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def _check(self, gate: Gate):
        for q in gate.support():
            if not 0 <= q < self.n:
                raise ValueError(f"gate target {q} outside qubit range 0..{self.n - 1}")

    def append(self, gate: Gate) -> "Circuit":
        self._check(gate)
        self.gates.append(gate)
        self.moments.append((len(self.gates) - 1, len(self.gates)))
        return self

    def append_moment(self, gates: Sequence[Gate]) -> "Circuit":
        seen = set()
        for g in gates:
            self._check(g)
            sup = set(g.support())
            if sup & seen:
                raise ValueError("gates within a moment must have disjoint support")
            seen |= sup
        start = len(self.gates)
        self.gates.extend(gates)
        self.moments.append((start, len(self.gates)))
        return self

    def extend(self, other: "Circuit") -> "Circuit":
        if other.n > self.n:
            raise ValueError("composed circuit acts on more qubits")
        off = len(self.gates)
        self.gates.extend(other.gates)
        self.moments.extend((a + off, b + off) for a, b in other.moments)
        if "cycle_marks" in other.meta:
            marks = self.meta.setdefault("cycle_marks", [])
            marks.extend(m + off for m in other.meta["cycle_marks"])
        if "cycle_spans" in other.meta:
            spans = self.meta.setdefault("cycle_spans", [])
            spans.extend((a + off, b + off) for a, b in other.meta["cycle_spans"])
        return self

    def copy(self) -> "Circuit":
        out = Circuit(self.n)
        out.gates = list(self.gates)
        out.moments = list(self.moments)
        out.meta = {k: (list(v) if isinstance(v, list) else v) for k, v in self.meta.items()}
        return out

    def inverse(self) -> "Circuit":
        """Circuit implementing the inverse unitary (up to global phase)."""
        out = Circuit(self.n)
        for g in reversed(self.gates):
            if g.kind == "rot":
                out.append(rot(g.targets[0], g.axis, -g.angle))
            elif g.kind == "h":
                out.append(hadamard(g.targets[0]))
            elif g.kind == "s":
                out.append(rot(g.targets[0], "z", -math.pi / 2))
            elif g.kind == "cphase":
                out.append(cphase(g.targets[0], g.targets[1], -g.angle))
            elif g.kind == "cpauli":
                out.append(g)
            else:
                raise ValueError(f"cannot invert gate kind {g.kind!r}")
        return out

    def support(self) -> set:
        out = set()
        for g in self.gates:
            out.update(g.support())
        return out

    def to_json(self) -> str:
        rows = []
        for g in self.gates:
            row = {"kind": g.kind, "targets": list(g.targets)}
            if g.kind in ("rot", "measure"):
                row["axis"] = g.axis
            if g.kind in ("rot", "cphase"):
                row["angle"] = g.angle
            if g.kind == "cpauli":
                row["string"] = {
                    "phase": {1: "+", -1: "-"}[g.string.phase],
                    "letters": {str(k): v for k, v in sorted(g.string.letters.items())},
                }
            rows.append(row)
        return json.dumps({"n": self.n, "gates": rows, "meta_keys": sorted(self.meta)}, indent=None)


@dataclass(frozen=True)
class DriveParams:
    """Floquet drive parameters: dimensionless JT, disorder bound and fields."""

    jt: float
    delta: float = 0.0
    h: Optional[dict] = None  # site id -> field, empty/None means clean drive
    cycles: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("disorder bound must be >= 0")
        if self.cycles < 0:
            raise ValueError("cycle count must be >= 0")
        for site, hi in (self.h or {}).items():
            if abs(hi) > self.delta + 1e-12:
                raise ValueError(f"|h[{site}]| = {abs(hi)} exceeds bound {self.delta}")


def sample_disorder(lat: Lattice, delta: float, seed: int) -> dict:
    """Per-driven-site fields drawn uniformly on [-delta, delta]."""
    if delta < 0:
        raise ValueError("disorder bound must be >= 0")
    rng = np.random.default_rng(seed)
    sites = lat.driven_sites
    vals = rng.uniform(-delta, delta, size=len(sites)) if delta > 0 else np.zeros(len(sites))
    return {s: float(v) for s, v in zip(sites, vals)}


def bond_coupling_gates(axis: str, jt: float, a: int, b: int) -> list:
    """Gate sequence implementing exp(-i (pi/4) JT alpha_a alpha_b) up to phase.

    Basis change alpha -> z on both sites, z-rotations by pi*JT/2 plus a
    cphase(-pi*JT), then the inverse change.  At JT=1 every piece is Clifford
    and the cphase is a CZ.
    """
    if axis not in ("x", "y", "z"):
        raise ValueError(f"bond axis {axis!r}")
    into, outof = [], []
    if axis == "x":
        into = [hadamard(a), hadamard(b)]
        outof = [hadamard(a), hadamard(b)]
    elif axis == "y":
        into = [rot(a, "x", math.pi / 2), rot(b, "x", math.pi / 2)]
        outof = [rot(a, "x", -math.pi / 2), rot(b, "x", -math.pi / 2)]
    core = [
        rot(a, "z", math.pi * jt / 2),
        rot(b, "z", math.pi * jt / 2),
        cphase(a, b, -math.pi * jt),
    ]
    return into + core + outof


def floquet_cycle(lat: Lattice, params: DriveParams) -> Circuit:
    """One stroboscopic period: U_x layer, U_y, U_z, then the disordered
    Z-field layer iff any field is nonzero.  Protruding and ancilla sites
    never appear.  Bonds within a layer run in ascending bond-id order."""
    n = max(s.id for s in lat.sites) + 1
    c = Circuit(n)
    for axis in ("x", "y", "z"):
        for bid in lat.driven_bonds(axis):
            bond = lat.bonds[bid]
            for g in bond_coupling_gates(axis, params.jt, bond.a, bond.b):
                c.append(g)
    h = params.h or {}
    if any(abs(v) > 0 for v in h.values()):
        for site in lat.driven_sites:
            hi = h.get(site, 0.0)
            if hi:
                c.append(rot(site, "z", math.pi * params.jt * hi / 2))
    c.meta["cycle_marks"] = [len(c.gates)]
    c.meta["cycle_spans"] = [(0, len(c.gates))]
    return c


def floquet_drive(lat: Lattice, params: DriveParams, cycles: Optional[int] = None) -> Circuit:
    """``cycles`` repetitions of the Floquet period, with cycle marks."""
    reps = params.cycles if cycles is None else cycles
    n = max(s.id for s in lat.sites) + 1
    out = Circuit(n)
    one = floquet_cycle(lat, params)
    for _ in range(reps):
        out.extend(one)
    return out


def mswap_circuit(lat: Lattice, bonds: Sequence[int]) -> Circuit:
    """Majorana-swap sequence: one JT=1 bond coupling per listed bond, in order."""
    n = max(s.id for s in lat.sites) + 1
    c = Circuit(n)
    for bid in bonds:
        if not 0 <= bid < len(lat.bonds):
            raise ValueError(f"invalid bond id {bid}")
        bond = lat.bonds[bid]
        for g in bond_coupling_gates(bond.axis, 1.0, bond.a, bond.b):
            c.append(g)
    return c


def hadamard_test(
    prep: Circuit,
    pre_string: PauliString,
    evolve: Circuit,
    post_string: PauliString,
    ancilla: int,
) -> Circuit:
    """Interferometric circuit whose estimator <X_A> + i<Y_A> is the overlap
    between the evolved states with and without ``pre_string`` applied."""
    for s in (pre_string, post_string):
        if not s.hermitian:
            raise ValueError("Hadamard-test strings must be Hermitian")
    sys_support = prep.support() | evolve.support()
    if ancilla in sys_support:
        raise ValueError(f"ancilla {ancilla} collides with system support")
    n = max([prep.n, evolve.n, ancilla + 1])
    c = Circuit(n)
    c.extend(prep)
    c.append(hadamard(ancilla))
    c.append(cpauli(ancilla, pre_string))
    c.extend(evolve)
    c.append(cpauli(ancilla, post_string))
    return c


# -- noiseless-equivalent transforms --------------------------------------

_BIT_TO_LETTER = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_LETTER_TO_BIT = {v: k for k, v in _BIT_TO_LETTER.items()}


def _cz_conjugate(p: str, q: str) -> tuple:
    """Image (letters only) of p (x) q under CZ conjugation."""
    x1, z1 = _LETTER_TO_BIT[p]
    x2, z2 = _LETTER_TO_BIT[q]
    return _BIT_TO_LETTER[(x1, z1 ^ x2)], _BIT_TO_LETTER[(x2, z2 ^ x1)]


def _pauli_gate(site: int, letter: str) -> Gate:
    return rot(site, letter.lower(), math.pi)


def is_cz(gate: Gate) -> bool:
    return gate.kind == "cphase" and abs((gate.angle % TWO_PI) - math.pi) < 1e-12


def randomized_compile(c: Circuit, seed: int) -> Circuit:
    """Dress every CZ (cphase at angle -pi mod 2pi) with uniformly random
    Pauli pairs and the compensating pair after, leaving the unitary fixed up
    to global phase.  Non-Clifford cphase angles are left untouched."""
    rng = np.random.default_rng(seed)
    letters = ("I", "X", "Y", "Z")
    out = Circuit(c.n)
    remap = []
    for idx, gate in enumerate(c.gates):
        remap.append(len(out.gates))
        if is_cz(gate):
            a, b = gate.targets
            p, q = rng.choice(letters), rng.choice(letters)
            pp, qq = _cz_conjugate(p, q)
            for site, letter in ((a, p), (b, q)):
                if letter != "I":
                    out.append(_pauli_gate(site, letter))
            out.append(gate)
            for site, letter in ((a, pp), (b, qq)):
                if letter != "I":
                    out.append(_pauli_gate(site, letter))
        else:
            out.append(gate)
    remap.append(len(out.gates))
    if "cycle_marks" in c.meta:
        out.meta["cycle_marks"] = [remap[m] for m in c.meta["cycle_marks"]]
    if "cycle_spans" in c.meta:
        out.meta["cycle_spans"] = [(remap[a], remap[b]) for a, b in c.meta["cycle_spans"]]
    return out


def dynamical_decoupling(c: Circuit, idle: Sequence[int], seed: int) -> Circuit:
    """Insert a random X-X or Y-Y pair on each idle site per Floquet cycle.

    The decorated spans are the cycle intervals recorded by the drive
    builders; each inserted pair multiplies to identity up to global phase.
    """
    idle = list(idle)
    if not idle:
        return c.copy()
    spans = c.meta.get("cycle_spans")
    if not spans:
        return c.copy()
    for start, stop in spans:
        for g in c.gates[start:stop]:
            busy = set(g.support()) & set(idle)
            if busy:
                raise ValueError(f"idle sites {sorted(busy)} have gates inside a cycle span")
    rng = np.random.default_rng(seed)
    out = Circuit(c.n)
    new_marks, new_spans = [], []
    prev = 0
    for start, stop in spans:
        for g in c.gates[prev:stop]:
            out.append(g)
        span_start = len(out.gates) - (stop - start)
        for site in idle:
            axis = "x" if rng.integers(2) == 0 else "y"
            out.append(_pauli_gate(site, axis.upper()))
            out.append(_pauli_gate(site, axis.upper()))
        new_marks.append(len(out.gates))
        new_spans.append((span_start, len(out.gates)))
        prev = stop
    for g in c.gates[prev:]:
        out.append(g)
    out.meta["cycle_marks"] = new_marks
    out.meta["cycle_spans"] = new_spans
    return out
