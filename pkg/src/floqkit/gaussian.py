"""Free-fermion engine in the Majorana representation.

A state is a fixed gauge sector (one value u = +-1 per bond, oriented from
the A sublattice to B) together with a real antisymmetric covariance over the
itinerant c-Majoranas, Gamma_jk = (i/2) <c_j c_k> off the diagonal.  The
clean drive is quadratic, so one Floquet period acts as an orthogonal
rotation R on the c's; expectation values of gauge-closed Pauli strings
reduce to a sign, a product of u's, and a Pfaffian.

Per-site letters admit two Majorana normal forms on physical states: the
c-carrying form i c b^alpha and the b-only form (two complementary b's).
Which form each site takes is fixed by requiring every b to close against
its bond partner; strings where this fails have expectation exactly zero.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lattice import AXES, Lattice, PauliString

_ANTISYM_TOL = 1e-12
_PIVOT_TOL = 1e-12

# b-only normal forms: letter -> (prefactor, (axis1, axis2)) with the listed order
_B_FORM = {
    "X": (-1j, ("y", "z")),
    "Y": (1j, ("x", "z")),
    "Z": (-1j, ("x", "y")),
}


@dataclass
class GaugeSector:
    """Fixed Z2 gauge field: one +-1 per bond in the A->B orientation."""

    lat: Lattice
    u: np.ndarray  # (n_bonds,) of +-1

    def bond_value(self, bid: int) -> int:
        return int(self.u[bid])

    def directed(self, s: int, t: int) -> int:
        """u for the step s -> t (sign flips when traversed B -> A)."""
        bid = self.lat.bond_between(s, t)
        val = int(self.u[bid])
        return val if self.lat.sublattice(s) == "A" else -val

    def path_factor(self, path: Sequence[int]) -> int:
        """Canonical gauge string: product of A->B-oriented u values along the
        path (matching the density-string convention)."""
        out = 1
        for s, t in zip(path, path[1:]):
            out *= int(self.u[self.lat.bond_between(s, t)])
        return out

    def flux(self, p: int) -> int:
        out = 1
        for bid in self.lat.plaquettes[p]:
            out *= int(self.u[bid])
        return out


def sector_from_fluxes(lat: Lattice, fluxes: Optional[Dict[int, int]] = None) -> GaugeSector:
    """Deterministic gauge choice reproducing the requested plaquette fluxes.

    All-(+1) is the canonical flux-free gauge; each -1 plaquette is realized
    by flipping the u's along the shortest dual path from the patch boundary
    (lexicographically smallest tie-break).
    """
    fluxes = dict(fluxes or {})
    for p in fluxes:
        if not 0 <= p < len(lat.plaquettes):
            raise ValueError(f"unknown plaquette {p}")
    u = np.ones(len(lat.bonds), dtype=np.int64)
    # dual adjacency: OUTER = -1; bond -> flanking plaquettes
    flanks = {}
    for p, bonds in enumerate(lat.plaquettes):
        for b in bonds:
            flanks.setdefault(b, []).append(p)
    adj = {}
    for b, ps in flanks.items():
        ends = ps + [-1] * (2 - len(ps))
        adj.setdefault(ends[0], []).append((ends[1], b))
        adj.setdefault(ends[1], []).append((ends[0], b))
    for p in sorted(q for q, w in fluxes.items() if w == -1):
        # BFS from outer face; deterministic exploration order
        parent = {-1: None}
        queue = deque([-1])
        while queue:
            cur = queue.popleft()
            if cur == p:
                break
            for nxt, b in sorted(adj.get(cur, [])):
                if nxt not in parent:
                    parent[nxt] = (cur, b)
                    queue.append(nxt)
        if p not in parent:
            raise ValueError(f"plaquette {p} unreachable from the boundary")
        cur = p
        while parent[cur] is not None:
            prev, b = parent[cur]
            u[b] = -u[b]
            cur = prev
    sec = GaugeSector(lat=lat, u=u)
    for p, w in fluxes.items():
        if sec.flux(p) != w:
            raise AssertionError(f"gauge construction failed at plaquette {p}")
    return sec


@dataclass
class Covariance:
    """Real antisymmetric c-Majorana covariance, entries in [-1/2, 1/2]."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if np.max(np.abs(g + g.T)) > _ANTISYM_TOL:
            raise ValueError("covariance must be antisymmetric")
        self.gamma = g

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def purity_defect(self) -> float:
        eye = np.eye(self.n) / 4.0
        return float(np.max(np.abs(self.gamma @ self.gamma.T - eye)))


def initial_covariance(lat: Lattice, sector: GaugeSector, pairing: Sequence[tuple]) -> Covariance:
    """Covariance of a paired-Majorana state.

    ``pairing`` rows are (j, k, path, occupation): the complex fermion built
    from c_j and c_k joined by the gauge string along ``path`` holds
    ``occupation`` in {0, 1}.  Sites left unpaired get zero rows: their modes
    close against boundary b-Majoranas outside this covariance.
    """
    n = max(s.id for s in lat.sites) + 1
    gamma = np.zeros((n, n))
    used = set()
    for j, k, path, occ in pairing:
        if j == k:
            raise ValueError("pairing endpoints coincide")
        if j in used or k in used:
            raise ValueError(f"site {j if j in used else k} appears in two pairings")
        if occ not in (0, 1):
            raise ValueError("occupation must be 0 or 1")
        used.update((j, k))
        path = list(path) if path != "shortest" else lat.shortest_path(j, k)
        if path[0] != j or path[-1] != k:
            raise ValueError("pairing path must run from j to k")
        phi = sector.path_factor(path)
        gamma[j, k] = phi * (2 * occ - 1) / 2.0
        gamma[k, j] = -gamma[j, k]
    return Covariance(gamma)


@dataclass
class ModeRotation:
    """Single-particle map of one Floquet period: c -> R c (Heisenberg)."""

    r: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if np.max(np.abs(r.T @ r - np.eye(r.shape[0]))) > 1e-12:
            raise ValueError("mode rotation is not orthogonal to 1e-12")
        self.r = r


def cycle_rotation(sector: GaugeSector, jt: float, lat: Lattice) -> ModeRotation:
    """One Floquet period in a fixed gauge sector.

    Layer order U_x, U_y, U_z; each driven bond rotates its (c_A, c_B) plane
    by pi*JT/2 signed by u; at JT=1 every bond rotation is the Majorana swap
    c_A -> -u c_B, c_B -> +u c_A.  Undriven sites are left fixed.
    """
    n = max(s.id for s in lat.sites) + 1
    theta = math.pi * jt / 2.0
    total = np.eye(n)
    for axis in ("x", "y", "z"):
        layer = np.eye(n)
        for bid in lat.driven_bonds(axis):
            bond = lat.bonds[bid]
            a, b = bond.a, bond.b
            if lat.sublattice(a) == "B":
                a, b = b, a
            u = float(sector.u[bid])
            layer[a, a] = math.cos(theta)
            layer[b, b] = math.cos(theta)
            layer[a, b] = -u * math.sin(theta)
            layer[b, a] = u * math.sin(theta)
        total = layer @ total
    return ModeRotation(total)


def evolve(cov: Covariance, rot: ModeRotation, cycles: int) -> Covariance:
    if rot.r.shape[0] != cov.n:
        raise ValueError("dimension mismatch between covariance and rotation")
    rn = np.linalg.matrix_power(rot.r, cycles)
    return Covariance(rn @ cov.gamma @ rn.T)


def pfaffian(a: np.ndarray) -> float:
    """Pfaffian of a real antisymmetric matrix by skew elimination with
    partial pivoting; pivots below 1e-12 give an exact 0."""
    m = np.array(a, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n):
        raise ValueError("square matrix required")
    if n == 0:
        return 1.0
    if np.max(np.abs(m + m.T)) > _ANTISYM_TOL:
        raise ValueError("matrix is not antisymmetric within 1e-12")
    if n % 2 == 1:
        return 0.0
    pf = 1.0
    for k in range(0, n - 1, 2):
        col = np.abs(m[k + 1 :, k])
        piv = int(np.argmax(col)) + k + 1
        if col.max() < _PIVOT_TOL:
            return 0.0
        if piv != k + 1:
            m[[k + 1, piv]] = m[[piv, k + 1]]
            m[:, [k + 1, piv]] = m[:, [piv, k + 1]]
            pf = -pf
        pf *= m[k, k + 1]
        if k + 2 < n:
            tau = m[k, k + 2 :] / m[k, k + 1]
            col = m[k + 2 :, k + 1]
            m[k + 2 :, k + 2 :] += np.outer(tau, col) - np.outer(col, tau)
    return float(pf)


def _site_assignment(lat: Lattice, letters: Dict[int, str]) -> Optional[Dict[int, str]]:
    """Per-site normal form closing every b-Majorana over the gauge bonds.

    Support sites take the c-carrying form ("C") or the b-only form ("B");
    any other site may host a physical-projector insertion ("D", the
    identity c b^x b^y b^z on physical states) when the closure requires it.
    Presence of b^beta at a site is linear over GF(2) in the binary form
    choice, so the closure conditions (matching presence across each bond,
    absence on missing bonds) form a linear system pinned at the patch
    boundary.  Returns None exactly when no closure exists, in which case the
    expectation value is 0.
    """
    supp = set(letters)

    def offset(site, axis):
        # b-presence = x_site XOR offset(site, axis)
        if site in supp:
            return 1 if letters[site].lower() == axis else 0
        return 0

    x: Dict[int, int] = {}
    pending = deque()
    # pins from missing bonds: presence must be zero there
    for site in lat.fermion_sites:
        for axis in AXES:
            if lat.axis_neighbor(site, axis) is None:
                want = offset(site, axis)
                if x.setdefault(site, want) != want:
                    return None
        if site in x:
            pending.append(site)
    while pending:
        site = pending.popleft()
        for axis in AXES:
            nb = lat.axis_neighbor(site, axis)
            if nb is None:
                continue
            want = x[site] ^ offset(site, axis) ^ offset(nb, axis)
            if nb in x:
                if x[nb] != want:
                    return None
            else:
                x[nb] = want
                pending.append(nb)
    for site in supp:
        if site not in x:  # pragma: no cover - connected patches pin everything
            raise RuntimeError("gauge-closure system left a support site unconstrained")
    out = {}
    for site, val in x.items():
        if site in supp:
            out[site] = "B" if val else "C"
        elif val:
            out[site] = "D"
    return out


def pauli_expectation(
    sector: GaugeSector, cov: Covariance, p: PauliString, lat: Lattice
) -> float:
    """<P> on the Gaussian state: gauge sign times u-product times Pfaffian;
    exactly 0 for strings that do not close over the gauge bonds."""
    if not p.hermitian:
        raise ValueError("expectation of a non-Hermitian string")
    if not p.letters:
        return float(p.phase.real)
    letters = p.letters
    forms = _site_assignment(lat, letters)
    if forms is None:
        return 0.0
    phase = complex(p.phase)
    factors = []  # ordered majorana factors: ("c", site) or ("b", site, axis)
    for site in sorted(forms):
        kind = forms[site]
        if kind == "C":
            phase *= 1j
            factors.append(("c", site))
            factors.append(("b", site, letters[site].lower()))
        elif kind == "B":
            pref, (ax1, ax2) = _B_FORM[letters[site]]
            phase *= pref
            factors.append(("b", site, ax1))
            factors.append(("b", site, ax2))
        else:  # projector insertion, identity on physical states
            factors.append(("c", site))
            factors.append(("b", site, "x"))
            factors.append(("b", site, "y"))
            factors.append(("b", site, "z"))
    # move all c's to the front, preserving relative order: each c hops over
    # every b factor currently to its left
    sign = 1
    cs, bs = [], []
    for f in factors:
        if f[0] == "c":
            if len(bs) % 2 == 1:
                sign = -sign
            cs.append(f[1])
        else:
            bs.append(f)
    # pair up b's into bond operators
    u_product = 1.0
    bs = list(bs)
    while bs:
        _, site, axis = bs[0]
        partner = lat.axis_neighbor(site, axis)
        idx = None
        for t in range(1, len(bs)):
            if bs[t][1] == partner and bs[t][2] == axis:
                idx = t
                break
        if idx is None:
            return 0.0  # unpaired b: not gauge-closed
        if (idx - 1) % 2 == 1:
            sign = -sign
        phase *= -1j
        u_product *= sector.directed(site, partner)
        del bs[idx]
        del bs[0]
    # c-monomial: sort ascending with parity, duplicates impossible
    order = np.argsort(cs, kind="stable")
    perm_sign = _permutation_sign(order)
    sign *= perm_sign
    cs_sorted = [cs[i] for i in order]
    r = len(cs_sorted)
    if r % 2 == 1:
        return 0.0
    sub = cov.gamma[np.ix_(cs_sorted, cs_sorted)]
    wick = ((-2j) ** (r // 2)) * pfaffian(sub)
    val = phase * sign * u_product * wick
    if abs(val.imag) > 1e-9:
        raise AssertionError(f"gauge-closed expectation came out complex: {val}")
    return float(val.real)


def _permutation_sign(order: np.ndarray) -> int:
    seen = np.zeros(len(order), dtype=bool)
    sign = 1
    for i in range(len(order)):
        if seen[i]:
            continue
        j = i
        length = 0
        while not seen[j]:
            seen[j] = True
            j = int(order[j])
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def unequal_time_correlator(
    sector: GaugeSector,
    cov: Covariance,
    j: int,
    k: int,
    cycles: int,
    rot: ModeRotation,
) -> complex:
    """<c_j(N) c_k(0)> = sum_m (R^N)_jm <c_m c_k> with <c_m c_k> from Gamma."""
    n = rot.r.shape[0]
    for s in (j, k):
        if not 0 <= s < n:
            raise ValueError(f"site {s} outside the mode space")
    rn = np.linalg.matrix_power(rot.r, cycles)
    return complex(rn[j, k] - 2j * (rn @ cov.gamma)[j, k])
