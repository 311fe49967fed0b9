"""Protocol builders: state preparation, anyon strings, probe circuits,
co-measurement plans, and the JT=1 Majorana transport map.

Together with :mod:`floqkit.circuits` this forms the circuit-construction
layer; drivers in :mod:`floqkit.experiments` compose these pieces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .circuits import Circuit, DriveParams, cphase, floquet_drive, hadamard, mswap_circuit, rot
from .lattice import Lattice, PauliString

# -- JT=1 transport -----------------------------------------------------------


def cycle_site_permutation(lat: Lattice) -> dict:
    """Site permutation of c-Majorana labels under one JT=1 Floquet cycle.

    Each drive layer swaps the two modes of every driven bond of its axis;
    missing bonds leave the mode in place.  Bulk sites sit on period-2 orbits
    (plaquette diagonals); boundary sites circulate chirally.
    """
    perm = {s: s for s in lat.fermion_sites}
    for axis in ("x", "y", "z"):
        layer = {}
        for bid in lat.driven_bonds(axis):
            bond = lat.bonds[bid]
            layer[bond.a] = bond.b
            layer[bond.b] = bond.a
        perm = {s: layer.get(t, t) for s, t in perm.items()}
    return perm


def orbit_of(perm: dict, site: int) -> list:
    out = [site]
    cur = perm[site]
    while cur != site:
        out.append(cur)
        cur = perm[cur]
    return out


def edge_translation(lat: Lattice) -> tuple:
    """Signed first-return map of the JT=1 cycle on the edge sites.

    Returns (next_index, sign) per edge position: the c-mode transport is
    followed until it re-enters the edge set (protrusion hops are stepped
    through), accumulating the JT=1 rotation signs in the canonical flux-free
    gauge.  Sites on bulk period-2 orbits map to themselves.
    """
    from . import gaussian

    edge = lat.edge_sites()
    edge_set = set(edge)
    pos = {s: i for i, s in enumerate(edge)}
    perm = cycle_site_permutation(lat)
    sector = gaussian.sector_from_fluxes(lat)
    r = gaussian.cycle_rotation(sector, 1.0, lat).r
    nxt, signs = [], []
    for s in edge:
        cur, sgn = s, 1
        guard = 0
        while True:
            step = perm[cur]
            sgn *= int(round(r[step, cur]))
            cur = step
            if cur in edge_set:
                break
            guard += 1
            if guard > len(perm):
                raise RuntimeError(f"edge transport from site {s} never returns to the edge")
        nxt.append(pos[cur])
        signs.append(sgn)
    if sorted(nxt) != list(range(len(edge))):
        raise RuntimeError("edge translation is not a permutation")
    return nxt, signs


# -- flux-free preparation ----------------------------------------------------


def _antipodal_leftover_pairs(lat: Lattice, uncovered: list) -> list:
    """Match leftover sites across opposite points of their transport orbits.

    Sites half an orbit apart exchange under the drive, which is the pairing
    used by the interferometry protocols; anything unmatched falls back to
    consecutive sorted pairing.
    """
    perm = cycle_site_permutation(lat)
    remaining = set(uncovered)
    pairs = []
    for s in sorted(uncovered):
        if s not in remaining:
            continue
        orbit = orbit_of(perm, s)
        if len(orbit) % 2 == 0:
            partner = orbit[len(orbit) // 2]
            if partner in remaining and partner != s:
                remaining.discard(s)
                remaining.discard(partner)
                pairs.append((s, partner))
    rest = sorted(remaining)
    for i in range(0, len(rest) - 1, 2):
        pairs.append((rest[i], rest[i + 1]))
    return pairs


def pairing_plan(lat: Lattice) -> list:
    """Deterministic Majorana pairing of the flux-free state.

    z-bond pairs first (A-site listed first), then the protruding-bond pair,
    then leftover sites paired across their transport orbits (opposite sides
    of the patch) along shortest paths.  An odd leftover stays unpaired; its
    mode closes against a boundary b-Majorana, fixed by the synthesis
    completion.
    """
    pairs = []
    zpairs, uncovered = lat.z_matching()
    for a, b in zpairs:
        pairs.append((a, b, [a, b]))
    if lat.protruding is not None:
        tip = lat.protruding["site"]
        bond = lat.bonds[lat.protruding["bond"]]
        base = bond.other(tip)
        if base in uncovered:
            uncovered.remove(base)
            pairs.append((tip, base, [tip, base]))
        else:
            # base is z-covered: its z-partner becomes a leftover instead
            zp = next(p for p in pairs if base in p[:2])
            pairs.remove(zp)
            orphan = zp[0] if zp[1] == base else zp[1]
            pairs.append((tip, base, [tip, base]))
            uncovered.append(orphan)
            uncovered.sort()
    for a, b in _antipodal_leftover_pairs(lat, uncovered):
        pairs.append((a, b, lat.shortest_path(a, b)))
    return pairs


def flux_free_prep(lat: Lattice, pairing: Optional[Sequence[tuple]] = None) -> Circuit:
    """Clifford circuit preparing the flux-free state from |0..0>.

    The state is pinned by all plaquette fluxes at +1 and every pairing at
    occupation zero (``pairing`` rows are (a, b, path); default
    :func:`pairing_plan`); remaining boundary degrees of freedom are
    completed deterministically by the tableau synthesis.
    """
    from . import stabilizer

    n = max(s.id for s in lat.sites) + 1
    gens = [lat.flux_string(p) for p in range(len(lat.plaquettes))]
    for a, b, path in (pairing_plan(lat) if pairing is None else pairing):
        gens.append(-lat.fermion_density_string(a, b, path))
    return stabilizer.synthesize_stabilizer_circuit(gens, n)


# -- roles on the patch -------------------------------------------------------


def stretched_pair(lat: Lattice) -> tuple:
    """The interferometry pair: the leftover pairing holding the smallest
    leftover site, stretched across opposite sides of its transport orbit."""
    _, uncovered = lat.z_matching()
    if len(uncovered) < 2:
        raise ValueError("no leftover pair: all sites are z-covered")
    pairs = _antipodal_leftover_pairs(lat, uncovered)
    lead = min(uncovered)
    for a, b in pairs:
        if lead in (a, b):
            return (a, b)
    raise ValueError("leftover pairing does not include the smallest leftover site")

def occupation_toggle(lat: Lattice, site: int) -> PauliString:
    """Single-site Pauli flipping the occupation of the pairing that ends at
    ``site`` and nothing else.  The letter is a missing bond axis, so the
    operator borrows a free boundary b-Majorana and leaves every flux alone."""
    missing = [ax for ax in ("x", "y", "z") if lat.axis_neighbor(site, ax) is None]
    if not missing:
        raise ValueError(f"site {site} has all three bonds; no free boundary Majorana")
    return PauliString.single(site, missing[0].upper())


def plaquette_dual_depth(lat: Lattice) -> list:
    """Distance of each plaquette from the patch boundary in the dual graph."""
    n_p = len(lat.plaquettes)
    bond_plaquettes = {}
    for p, bonds in enumerate(lat.plaquettes):
        for b in bonds:
            bond_plaquettes.setdefault(b, []).append(p)
    adj = [set() for _ in range(n_p)]
    outer = set()
    for b, ps in bond_plaquettes.items():
        if len(ps) == 1:
            outer.add(ps[0])
        elif len(ps) == 2:
            adj[ps[0]].add(ps[1])
            adj[ps[1]].add(ps[0])
    depth = [None] * n_p
    frontier = sorted(outer)
    d = 0
    while frontier:
        nxt = []
        for p in frontier:
            if depth[p] is None:
                depth[p] = d
                nxt.extend(q for q in adj[p] if depth[q] is None)
        frontier = sorted(set(nxt))
        d += 1
    return depth


def center_plaquette(lat: Lattice) -> int:
    depth = plaquette_dual_depth(lat)
    best = max(range(len(depth)), key=lambda p: (depth[p], -p))
    return best


def diagonal_pair(lat: Lattice, p: int) -> tuple:
    """(s0, s1, path): the period-2 Majorana pair across plaquette ``p``.

    ``s0`` is the endpoint whose z-bond is not on the returned path, so a Z
    chain starting at s0 flips this pairing's occupation.
    """
    perm = cycle_site_permutation(lat)
    loop = lat.plaquette_sites[p]
    cands = []
    for s in sorted(loop):
        t = perm[s]
        if t != s and perm[t] == s and t in loop:
            cands.append((s, t))
    if not cands:
        raise ValueError(f"plaquette {p} hosts no period-2 diagonal pair")
    s0, s1 = cands[0]
    # the two routes around the hexagon from s0 to s1
    i0 = loop.index(s0)
    ordered = loop[i0:] + loop[:i0]
    j = ordered.index(s1)
    route_a = ordered[: j + 1]
    route_b = [s0] + list(reversed(ordered[j:]))
    zb = lat.axis_neighbor(s0, "z")
    for route in (route_a, route_b):
        if zb is None or route[1] != zb:
            return s0, s1, route
    raise ValueError("both hexagon routes start along the z-bond")  # pragma: no cover


def transmutation_swap_bonds(lat: Lattice, p: Optional[int] = None) -> list:
    """Ordered M-SWAP bonds turning the flux-free z-pairing into the initial
    state with the central plaquette's fermion paired across its diagonal.

    Exchanges the c-modes of the two z-partners of the diagonal endpoints via
    a three-swap transposition along the hexagon.
    """
    p = center_plaquette(lat) if p is None else p
    s0, s1, path = diagonal_pair(lat, p)
    d = lat.axis_neighbor(s0, "z")
    if d is None:
        raise ValueError("diagonal endpoint lacks a z-partner")
    # transpose the c-modes at z(s0) and s1: afterwards the z-pair of s0 has
    # become the (s0, s1) diagonal and the two orphaned partners pair up
    route = lat.shortest_path(d, s1)
    if len(route) != 3:
        raise ValueError("z-partner of the diagonal endpoint is not two bonds from s1")
    b1 = lat.bond_between(route[0], route[1])
    b2 = lat.bond_between(route[1], route[2])
    return [b1, b2, b1]


# -- anyon creation -----------------------------------------------------------


def _zbond_flanks(lat: Lattice, site: int) -> list:
    """Plaquettes flanking the z-bond of ``site``."""
    partner = lat.axis_neighbor(site, "z")
    if partner is None:
        return []
    bid = lat.bond_between(site, partner)
    return [p for p, bonds in enumerate(lat.plaquettes) if bid in bonds]


def e_anyon_chain(lat: Lattice, p: int) -> list:
    """Z-chain sites creating an e anyon on plaquette ``p`` with the partner
    pushed off the patch: consecutive z-bonds telescope the flux flips until
    the last z-bond flanks a single plaquette."""
    s0, _, _ = diagonal_pair(lat, p)
    chain = [s0]
    flanks = _zbond_flanks(lat, s0)
    if p not in flanks:
        raise ValueError("diagonal endpoint's z-bond does not flank the plaquette")
    nxt = [q for q in flanks if q != p]
    visited = {p}
    while nxt:
        q = nxt[0]
        visited.add(q)
        # the other z-bond of hexagon q continues the chain
        zsites = []
        for s in lat.plaquette_sites[q]:
            zp = lat.axis_neighbor(s, "z")
            if zp is not None and zp in lat.plaquette_sites[q] and s < zp:
                zsites.append((s, zp))
        cur_bond = {chain[-1], lat.axis_neighbor(chain[-1], "z")}
        other = [pair for pair in zsites if set(pair) != cur_bond]
        if len(other) != 1:
            raise ValueError(f"plaquette {q} does not continue the z-chain")
        a, b = other[0]
        step = a if lat.sublattice(a) == "A" else b
        chain.append(step)
        flanks = [r for r in _zbond_flanks(lat, step) if r != q]
        nxt = [r for r in flanks if r not in visited]
    return chain


def _z_chain_between(lat: Lattice, p1: int, p2: int) -> list:
    """Sites whose Z's telescope flux flips from plaquette p1 to p2.

    Consecutive z-bonds of the chain share a hexagon, so the chain runs along
    a row of plaquettes; raises if the two plaquettes are not row-connected.
    """
    # z-dual adjacency: plaquette -> {z-bond: neighbour plaquette or None}
    start_bonds = [
        b for b in lat.plaquettes[p1] if lat.bonds[b].axis == "z"
    ]
    for b0 in sorted(start_bonds):
        chain = []
        cur_p, cur_b = p1, b0
        ok = True
        while True:
            bond = lat.bonds[cur_b]
            site = bond.a if lat.sublattice(bond.a) == "A" else bond.b
            chain.append(site)
            flanks = [q for q, bonds in enumerate(lat.plaquettes) if cur_b in bonds]
            nxt = [q for q in flanks if q != cur_p]
            if not nxt:
                ok = False
                break
            if nxt[0] == p2:
                return chain
            cur_p = nxt[0]
            zb = [b for b in lat.plaquettes[cur_p] if lat.bonds[b].axis == "z" and b != cur_b]
            if len(zb) != 1:
                ok = False
                break
            cur_b = zb[0]
    raise ValueError(f"plaquettes {p1} and {p2} are not connected by a z-bond row")


def anyon_creation_string(lat: Lattice, kind: str, placement) -> PauliString:
    """Pauli string creating the requested anyon content on a prepared state.

    kind "psi": ``placement`` is a pair of sites (one endpoint of each of two
    fermion pairings); the path string flips exactly those two occupations
    and no flux.
    kind "m": ``placement`` is a pair of plaquettes; a Z chain along the row
    between them flips both fluxes and, on a z-paired background, no
    occupation.
    kind "e": ``placement`` is a plaquette id; a Z chain from the plaquette's
    diagonal fermion to the boundary flips its flux and occupation together,
    pushing the partner anyon off the patch.
    """
    if kind == "psi":
        a, b = placement
        s = lat.fermion_density_string(a, b, lat.shortest_path(a, b))
        return s.with_phase(1)
    if kind == "m":
        p1, p2 = placement
        for p in (p1, p2):
            if not 0 <= p < len(lat.plaquettes):
                raise ValueError(f"placement outside lattice: plaquette {p}")
        chain = _z_chain_between(lat, p1, p2)
        out = PauliString.identity()
        for s in chain:
            out = out * PauliString.single(s, "Z")
        return out
    if kind == "e":
        p = int(placement)
        if not 0 <= p < len(lat.plaquettes):
            raise ValueError(f"placement outside lattice: plaquette {p}")
        chain = e_anyon_chain(lat, p)
        out = PauliString.identity()
        for s in chain:
            out = out * PauliString.single(s, "Z")
        return out
    raise ValueError(f"unknown anyon kind {kind!r}")


# -- spectral probe -----------------------------------------------------------


def probe_strings(lat: Lattice, j: int) -> tuple:
    """(P_0, P_j): density strings pairing the protruding Majorana with the
    probe base and with edge site j."""
    if lat.protruding is None:
        raise ValueError("lattice has no protruding bond")
    tip = lat.protruding["site"]
    bond = lat.bonds[lat.protruding["bond"]]
    base = bond.other(tip)
    p0 = lat.fermion_density_string(tip, base, [tip, base])
    if j == base:
        return p0, p0
    path = [tip] + lat.shortest_path(base, j)
    pj = lat.fermion_density_string(tip, j, path)
    return p0, pj


def spectral_probe_circuit(
    lat: Lattice, j: int, n_cycles: int, params: DriveParams, ancilla: int
) -> Circuit:
    """Hadamard-test circuit whose estimator is the unequal-time correlator
    C(j, N) between the probe fermion string and its N-cycle image."""
    from .circuits import hadamard_test

    if lat.protruding is None:
        raise ValueError("lattice lacks a protruding bond")
    if j not in lat.edge_sites():
        raise ValueError(f"site {j} is not on the edge")
    prep = flux_free_prep(lat)
    for g in spectral_occupy_gates(lat):
        prep.append(g)
    p0, pj = probe_strings(lat, j)
    evolve = floquet_drive(lat, params, n_cycles)
    return hadamard_test(prep, p0, evolve, pj, ancilla)


def spectral_occupy_gates(lat: Lattice):
    """Gates occupying the protruding-bond fermion on top of the flux-free state."""
    tip = lat.protruding["site"]
    toggle = occupation_toggle(lat, tip)
    ((site, letter),) = toggle.letters.items()
    return [rot(site, letter.lower(), math.pi)]


# -- flux co-measurement ------------------------------------------------------


@dataclass(frozen=True)
class CofluxPlan:
    """Basis-change circuit plus per-plaquette decoders.

    ``decoders[p]`` is (sign, qubits): the flux value of a bitstring row is
    sign * prod over qubits of (1 - 2 bit).
    """

    basis_change: Circuit
    decoders: dict

    def decode(self, bits, qubit_order) -> dict:
        pos = {q: i for i, q in enumerate(qubit_order)}
        out = {}
        for p, (sign, qubits) in self.decoders.items():
            val = sign
            for q in qubits:
                val *= 1 - 2 * int(bits[pos[q]])
            out[p] = val
        return out


# single-qubit basis changes used around the co-measurement CZ layer,
# indexed by the axis permutation they induce under forward conjugation
_BASIS_GATES = {
    "i": [],
    "h": [hadamard],  # swaps x and z
    "rx": [lambda q: rot(q, "x", math.pi / 2)],  # y -> z -> -y
    "s": [lambda q: rot(q, "z", math.pi / 2)],  # x -> y -> -x
    "sh": [lambda q: rot(q, "z", math.pi / 2), hadamard],
    "hs": [hadamard, lambda q: rot(q, "z", math.pi / 2)],
}


def _basis_gate_list(name: str, q: int) -> list:
    out = []
    for maker in _BASIS_GATES[name]:
        out.append(maker(q))
    return out


def coflux_measurement_plan(lat: Lattice, plaquettes: Iterable[int]) -> CofluxPlan:
    """One extra CZ layer on shared bonds, with per-bond single-qubit
    rotations chosen so that every requested flux becomes a product of
    single-site readouts in the computational basis.

    y-shared bonds need only the CZ; z- and x-shared bonds take additional
    rotations before it.  Raises when the requested set cannot be covered by
    a single entangling layer (overlapping shared bonds, or incompatible
    readout bases).
    """
    from . import stabilizer

    plaquettes = sorted(set(plaquettes))
    n = max(s.id for s in lat.sites) + 1
    strings = {p: lat.flux_string(p) for p in plaquettes}
    shared = {}
    for i, p in enumerate(plaquettes):
        for q in plaquettes[i + 1 :]:
            common = set(lat.plaquettes[p]) & set(lat.plaquettes[q])
            if len(common) > 1:
                raise ValueError(f"plaquettes {p},{q} share more than one bond")
            for b in common:
                shared[b] = (p, q)
    touched = set()
    for b in shared:
        bond = lat.bonds[b]
        if bond.a in touched or bond.b in touched:
            raise ValueError("shared bonds overlap; needs more than one CZ layer")
        touched.update((bond.a, bond.b))

    def letters_consistent(strings_iter, sites):
        seen = {}
        for s in strings_iter:
            for site in sites:
                letter = s.letters.get(site)
                if letter is None:
                    continue
                if seen.setdefault(site, letter) != letter:
                    return False
        return True

    circuit = Circuit(n)
    for b in sorted(shared):
        bond = lat.bonds[b]
        p, q = shared[b]
        found = None
        for na in sorted(_BASIS_GATES):
            for nb in sorted(_BASIS_GATES):
                cand = Circuit(n)
                for g in _basis_gate_list(na, bond.a) + _basis_gate_list(nb, bond.b):
                    cand.append(g)
                cand.append(cphase(bond.a, bond.b, -math.pi))
                inv = cand.inverse()
                s1 = stabilizer.conjugate_string(strings[p], inv)
                s2 = stabilizer.conjugate_string(strings[q], inv)
                if letters_consistent((s1, s2), (bond.a, bond.b)):
                    found = cand
                    break
            if found:
                break
        if found is None:  # pragma: no cover - honeycomb bonds always resolve
            raise ValueError(f"shared bond {b} admits no single-layer co-measurement")
        circuit.extend(found)
    # push every flux forward through the layer, then rotate site-wise to Z
    conj = {p: stabilizer.conjugate_string(s, circuit.inverse()) for p, s in strings.items()}
    site_letter = {}
    for p, s in conj.items():
        for site, letter in s.letters.items():
            if site_letter.setdefault(site, letter) != letter:
                raise ValueError(
                    f"site {site} needs two bases at once; more than one CZ layer required"
                )
    for site, letter in sorted(site_letter.items()):
        if letter == "X":
            circuit.append(hadamard(site))
        elif letter == "Y":
            # forward conjugation by Rx(+pi/2) maps Y to Z
            circuit.append(rot(site, "x", math.pi / 2))
    decoders = {}
    for p in plaquettes:
        final = stabilizer.conjugate_string(strings[p], circuit.inverse())
        qubits = tuple(sorted(final.letters))
        for site, letter in final.letters.items():
            if letter != "Z":
                raise AssertionError("co-measurement basis change failed")
        if final.phase not in (1, -1):  # pragma: no cover
            raise AssertionError("non-Hermitian decoded flux")
        decoders[p] = (int(final.phase.real), qubits)
    return CofluxPlan(basis_change=circuit, decoders=decoders)
