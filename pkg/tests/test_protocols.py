import math

import numpy as np
import pytest

from floqkit import stabilizer
from floqkit.circuits import Circuit, DriveParams, floquet_drive, mswap_circuit
from floqkit.lattice import PauliString, build_patch
from floqkit.protocols import (
    anyon_creation_string,
    center_plaquette,
    coflux_measurement_plan,
    cycle_site_permutation,
    diagonal_pair,
    e_anyon_chain,
    edge_translation,
    flux_free_prep,
    occupation_toggle,
    orbit_of,
    pairing_plan,
    stretched_pair,
    transmutation_swap_bonds,
)


def ff_tableau(lat):
    n = max(s.id for s in lat.sites) + 1
    return stabilizer.Tableau(n).apply(flux_free_prep(lat))


def expect_conjugated(t, string, obs):
    """<psi| S obs S |psi> for a Hermitian Pauli S applied to the state."""
    prod = string * obs * string
    return complex(prod.phase * t.pauli_expectation(prod.with_phase(1))).real


@pytest.mark.parametrize("geom", ["hex1", "hex2", "ring1", "ring3"])
def test_flux_free_prep(geom):
    lat = build_patch(geom)
    t = ff_tableau(lat)
    for p in range(len(lat.plaquettes)):
        assert t.pauli_expectation(lat.flux_string(p)) == 1
    for a, b, path in pairing_plan(lat):
        s = lat.fermion_density_string(a, b, path)
        assert t.pauli_expectation(s) == -1  # occupation zero


def test_prep_depth_reasonable():
    lat = build_patch("ring3")
    prep = flux_free_prep(lat)
    assert len(prep.gates) < 4000


def test_stretched_pair_on_common_orbit():
    lat = build_patch("ring1")
    a, b = stretched_pair(lat)
    perm = cycle_site_permutation(lat)
    orbit = orbit_of(perm, a)
    assert b in orbit
    assert orbit.index(b) == len(orbit) // 2  # antipodal


def test_occupation_toggle_flips_one_pair():
    lat = build_patch("ring1")
    t = ff_tableau(lat)
    a, b = stretched_pair(lat)
    tog = occupation_toggle(lat, a)
    stretch = lat.fermion_density_string(a, b, lat.shortest_path(a, b))
    assert expect_conjugated(t, tog, stretch) == 1.0  # flipped to occupied
    # all fluxes untouched
    for p in range(len(lat.plaquettes)):
        assert expect_conjugated(t, tog, lat.flux_string(p)) == 1.0
    with pytest.raises(ValueError):
        occupation_toggle(lat, lat.plaquette_sites[center_plaquette(lat)][0])


def test_psi_pair_creation():
    lat = build_patch("ring3")
    t = ff_tableau(lat)
    pairs = [(a, b, p) for a, b, p in pairing_plan(lat) if len(p) == 2]
    (a1, b1, p1), (a2, b2, p2) = pairs[3], pairs[10]
    psi = anyon_creation_string(lat, "psi", (a1, a2))
    for p in range(len(lat.plaquettes)):
        assert expect_conjugated(t, psi, lat.flux_string(p)) == 1.0
    s1 = lat.fermion_density_string(a1, b1, p1)
    s2 = lat.fermion_density_string(a2, b2, p2)
    assert expect_conjugated(t, psi, s1) == 1.0  # n flipped to 1
    assert expect_conjugated(t, psi, s2) == 1.0
    # an untouched pair stays empty
    other = next((a, b, p) for a, b, p in pairs if a not in (a1, a2))
    s3 = lat.fermion_density_string(*other)
    assert expect_conjugated(t, psi, s3) == -1.0


def test_m_pair_creation():
    lat = build_patch("ring3")
    t = ff_tableau(lat)
    # two plaquettes connected along a z-bond row
    chain_start = center_plaquette(lat)
    flanks = sorted(
        q
        for q in range(len(lat.plaquettes))
        if q != chain_start and set(lat.plaquettes[q]) & set(lat.plaquettes[chain_start])
    )
    target = None
    for q in flanks:
        try:
            m = anyon_creation_string(lat, "m", (chain_start, q))
            target = q
            break
        except ValueError:
            continue
    assert target is not None
    for p in range(len(lat.plaquettes)):
        want = -1.0 if p in (chain_start, target) else 1.0
        assert expect_conjugated(t, m, lat.flux_string(p)) == want
    for a, b, path in pairing_plan(lat):
        s = lat.fermion_density_string(a, b, path)
        assert expect_conjugated(t, m, s) == -1.0  # occupations unchanged


def test_e_anyon_and_partner_pushed_out():
    lat = build_patch("ring3")
    state_pairs = pairing_plan(lat)
    pc = center_plaquette(lat)
    swaps = mswap_circuit(lat, transmutation_swap_bonds(lat, pc))
    n = max(s.id for s in lat.sites) + 1
    t = stabilizer.Tableau(n).apply(flux_free_prep(lat)).apply(swaps)
    e = anyon_creation_string(lat, "e", pc)
    assert all(letter == "Z" for letter in e.letters.values())
    assert e.weight == 3
    for p in range(len(lat.plaquettes)):
        want = -1.0 if p == pc else 1.0
        assert expect_conjugated(t, e, lat.flux_string(p)) == want
    s0, s1, path = diagonal_pair(lat, pc)
    diag = lat.fermion_density_string(s0, s1, path)
    before = t.pauli_expectation(diag)
    assert expect_conjugated(t, e, diag) == -before  # occupation flipped
    with pytest.raises(ValueError):
        anyon_creation_string(lat, "e", 99)


def test_transmutation_swaps_create_diagonal():
    lat = build_patch("ring3")
    pc = center_plaquette(lat)
    s0, s1, path = diagonal_pair(lat, pc)
    n = max(s.id for s in lat.sites) + 1
    t = stabilizer.Tableau(n).apply(flux_free_prep(lat)).apply(
        mswap_circuit(lat, transmutation_swap_bonds(lat, pc))
    )
    diag = lat.fermion_density_string(s0, s1, path)
    assert abs(t.pauli_expectation(diag)) == 1
    for p in range(len(lat.plaquettes)):
        assert t.pauli_expectation(lat.flux_string(p)) == 1


def test_edge_translation_is_permutation():
    for geom in ("hex2", "ring1", "ring1+probe"):
        lat = build_patch(geom)
        nxt, signs = edge_translation(lat)
        assert sorted(nxt) == list(range(len(lat.edge_cycle)))
        assert all(s in (-1, 1) for s in signs)


# -- flux co-measurement ------------------------------------------------------


def decode_exact(lat, plan, t):
    """Decode fluxes from one deterministic sample after the basis change."""
    rng = np.random.default_rng(0)
    work = t.copy().apply(plan.basis_change)
    qubits = sorted({q for _, qs in plan.decoders.values() for q in qs})
    bits = [work.measure(q, rng) for q in qubits]
    return plan.decode(bits, qubits)


def test_coflux_single_plaquette():
    lat = build_patch("ring1")
    plan = coflux_measurement_plan(lat, [0])
    assert not any(g.kind == "cphase" for g in plan.basis_change.gates)
    t = ff_tableau(lat)
    assert decode_exact(lat, plan, t) == {0: 1}


def test_coflux_pairs_and_full_ring():
    lat = build_patch("ring1")
    pc = center_plaquette(lat)
    outer = [p for p in range(len(lat.plaquettes)) if p != pc]
    # pairs sharing one bond: one CZ
    plan2 = coflux_measurement_plan(lat, outer[:2])
    czs = [g for g in plan2.basis_change.gates if g.kind == "cphase"]
    assert len(czs) <= 1
    # the six outer-ring plaquettes need a single extra CZ layer
    plan6 = coflux_measurement_plan(lat, outer)
    czs = [g for g in plan6.basis_change.gates if g.kind == "cphase"]
    assert len(czs) >= 1
    touched = [q for g in czs for q in g.targets]
    assert len(touched) == len(set(touched))  # one layer: disjoint CZs
    # decoded fluxes match the exact values on the flux-free state
    t = ff_tableau(lat)
    assert decode_exact(lat, plan6, t) == {p: 1 for p in outer}


def test_coflux_on_flux_defect_state():
    """Decoder validated against the stabilizer oracle on a -1 flux state."""
    lat = build_patch("ring1")
    pc = center_plaquette(lat)
    outer = [p for p in range(len(lat.plaquettes)) if p != pc]
    target = outer[0]
    m = anyon_creation_string(lat, "m", (target, outer[3])) if False else None
    # flip one outer flux with a Z chain (e-style string from that plaquette)
    chain = e_anyon_chain(lat, target)
    flip = PauliString({s: "Z" for s in chain})
    n = max(s.id for s in lat.sites) + 1
    t = ff_tableau(lat)
    gates = Circuit(n)
    for s in chain:
        from floqkit.circuits import rot as mkrot

        gates.append(mkrot(s, "z", math.pi))
    t.apply(gates)
    expected = {p: t.pauli_expectation(lat.flux_string(p)) for p in outer}
    plan = coflux_measurement_plan(lat, outer)
    assert decode_exact(lat, plan, t) == expected


def test_coflux_overlapping_shared_bonds_rejected():
    lat = build_patch("ring3")
    # three plaquettes around one vertex share bonds pairwise touching a site
    pc = center_plaquette(lat)
    ring = [q for q in range(len(lat.plaquettes)) if q != pc and set(lat.plaquettes[q]) & set(lat.plaquettes[pc])]
    with pytest.raises(ValueError):
        coflux_measurement_plan(lat, [pc] + ring[:2])
