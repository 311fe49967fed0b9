"""Protocol drivers: imaging, braiding interferometry, edge spectroscopy and
anyon transmutation, each assembling lattice + circuits + an engine and
emitting a raw result table.

Engine selection: the Clifford tableau is exact at JT=1 without disorder or
noise; the Gaussian engine covers any clean JT for protocols without
controlled operations; everything else (disorder, noise, interferometry away
from JT=1) runs on the dense statevector within its qubit cap.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import analysis, gaussian, protocols, stabilizer
from .circuits import Circuit, DriveParams, cpauli, floquet_drive, hadamard, hadamard_test
from .circuits import dynamical_decoupling, mswap_circuit, randomized_compile, rot, sample_disorder
from .dense import DEFAULT_QUBIT_CAP, MeasurementPlan, NoiseModel, QubitCapError, StateVector
from .dense import run_trajectories
from .lattice import Lattice, PauliString, build_patch, load_geometry_dict

DEFAULT_CYCLES = {"imaging": 10, "braiding": 20, "spectral": 20, "transmutation": 20}


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything needed to reproduce one run."""

    experiment: str
    geometry: str = "ring1"
    jt: float = 1.0
    delta: float = 0.0
    cycles: Optional[int] = None
    engine: str = "auto"
    shots: int = 0  # 0: exact expectation mode
    twirls: int = 1
    disorder_realizations: int = 1
    trajectories: int = 0
    postselect_plaquettes: tuple = ()
    seed: int = 0
    noise: Optional[NoiseModel] = None
    qubit_cap: int = DEFAULT_QUBIT_CAP

    def __post_init__(self):
        if self.experiment not in DEFAULT_CYCLES:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.shots < 0 or self.twirls < 1 or self.disorder_realizations < 1:
            raise ValueError("shots >= 0, twirls >= 1, realizations >= 1 required")

    @property
    def n_cycles(self) -> int:
        return DEFAULT_CYCLES[self.experiment] if self.cycles is None else self.cycles

    def to_manifest(self) -> dict:
        out = {
            "experiment": self.experiment,
            "geometry": str(self.geometry),
            "jt": self.jt,
            "delta": self.delta,
            "cycles": self.n_cycles,
            "engine": self.engine,
            "shots": self.shots,
            "twirls": self.twirls,
            "disorder_realizations": self.disorder_realizations,
            "trajectories": self.trajectories,
            "postselect_plaquettes": list(self.postselect_plaquettes),
            "seed": self.seed,
        }
        if self.noise is not None:
            out["noise"] = {
                "p_depol": self.noise.p_depol,
                "gamma": self.noise.gamma,
                "damped_sites": list(self.noise.damped_sites),
                "readout_p10": self.noise.readout_p10,
                "readout_p01": self.noise.readout_p01,
            }
        return out


@dataclass
class ResultTable:
    """Raw per-(cycle, observable, twirl, realization) values plus provenance."""

    experiment: str
    rows: list = field(default_factory=list)  # dicts: cycle, observable, twirl, realization, value
    meta: dict = field(default_factory=dict)

    def add(self, cycle, observable, value, twirl=0, realization=0):
        self.rows.append(
            {
                "cycle": int(cycle),
                "observable": str(observable),
                "twirl": int(twirl),
                "realization": int(realization),
                "value": float(value),
            }
        )

    def series(self, observable: str, twirl=None, realization=None) -> np.ndarray:
        picked = {}
        for r in self.rows:
            if r["observable"] != observable:
                continue
            if twirl is not None and r["twirl"] != twirl:
                continue
            if realization is not None and r["realization"] != realization:
                continue
            picked[r["cycle"]] = r["value"]
        return np.array([picked[c] for c in sorted(picked)])

    def observables(self) -> list:
        return sorted({r["observable"] for r in self.rows})

    def to_csv_text(self, header_comment: str = "") -> str:
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("cycle,observable,twirl,realization,value")
        for r in self.rows:
            lines.append(
                f"{r['cycle']},{r['observable']},{r['twirl']},{r['realization']},{r['value']!r}"
            )
        return "\n".join(lines) + "\n"


def geometry_hash(spec) -> str:
    data = load_geometry_dict(spec)
    canon = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _snapped_jt1(jt: float) -> bool:
    return abs(jt - 1.0) < 1e-12


def select_engine(plan: ExperimentPlan, lat: Lattice, needs_controlled: bool) -> str:
    """Resolve the engine per the selection rule; raises when only the dense
    engine applies but the patch exceeds its qubit cap."""
    if plan.engine != "auto":
        return plan.engine
    clean = plan.noise is None or plan.noise.silent
    disorder_free = plan.delta == 0.0
    if disorder_free and _snapped_jt1(plan.jt) and clean:
        return "stabilizer"
    if disorder_free and clean and not needs_controlled:
        return "gaussian"
    n = max(s.id for s in lat.sites) + 1
    extra = 1 if needs_controlled else 0
    if n + extra > plan.qubit_cap:
        raise EngineError(
            f"dense engine required but qubit cap exceeded: {n + extra} > {plan.qubit_cap}"
        )
    return "dense"


def _drive_params(plan: ExperimentPlan, lat: Lattice, realization: int) -> DriveParams:
    h = None
    if plan.delta > 0:
        h = sample_disorder(lat, plan.delta, seed_of(plan.seed, "disorder", realization))
    return DriveParams(jt=plan.jt, delta=plan.delta, h=h)


def seed_of(base: int, *parts) -> int:
    text = json.dumps([base, *parts], sort_keys=True)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:6], "big")


def _base_meta(plan: ExperimentPlan, lat: Lattice, engine: str) -> dict:
    from .lattice import count_mismatches

    return {
        "plan": plan.to_manifest(),
        "engine": engine,
        "geometry_hash": geometry_hash(plan.geometry),
        "count_mismatches": count_mismatches(lat),
    }


# -- prepared states ---------------------------------------------------------


def imaging_state(lat: Lattice) -> dict:
    """Tracked pairs of the imaging protocol: one occupied bulk z-bond pair
    on the central plaquette and the occupied stretched edge pair, both
    toggled by a single fermion-pair creation string."""
    pc = protocols.center_plaquette(lat)
    loop = lat.plaquette_sites[pc]
    zpairs = []
    for s in sorted(loop):
        t = lat.axis_neighbor(s, "z")
        if t is not None and t in loop and lat.sublattice(s) == "A":
            zpairs.append((s, t))
    if not zpairs:
        raise ValueError("central plaquette has no z-bond")
    bulk = zpairs[0]
    edge = protocols.stretched_pair(lat)
    toggle = protocols.anyon_creation_string(lat, "psi", (bulk[0], edge[0]))
    return {"bulk": bulk, "edge": edge, "toggle": toggle, "plaquette": pc}


def pauli_gates(string: PauliString) -> list:
    return [rot(site, letter.lower(), math.pi) for site, letter in sorted(string.letters.items())]


def transmutation_state(lat: Lattice) -> dict:
    """Initial pairing, loop operator and e-anyon string for the
    transmutation experiment on this patch."""
    pc = protocols.center_plaquette(lat)
    s0, s1, path = protocols.diagonal_pair(lat, pc)
    swap_bonds = protocols.transmutation_swap_bonds(lat, pc)
    swaps = mswap_circuit(lat, swap_bonds)
    # post-swap pairing: the transposition exchanges the modes at z(s0) and
    # s1 (forming the diagonal plus an orphan pair) and can flip signs of
    # modes it passes through, so every pair's occupation is measured by
    # Heisenberg-propagating its density string through the swap circuit
    sector = gaussian.sector_from_fluxes(lat)
    base_plan = protocols.pairing_plan(lat)
    cov0 = gaussian.initial_covariance(lat, sector, [(a, b, p, 0) for a, b, p in base_plan])
    d = lat.axis_neighbor(s0, "z")
    z1 = lat.axis_neighbor(s1, "z")
    targets = []
    for a, b, p in base_plan:
        if {a, b} & {s1, d}:
            continue
        targets.append((a, b, p))
    targets.append((s0, s1, path))
    targets.append((d, z1, lat.shortest_path(d, z1)))
    pairing = []
    for a, b, p in targets:
        string = lat.fermion_density_string(a, b, p)
        conj = stabilizer.conjugate_string(string, swaps)
        occ = (1 + gaussian.pauli_expectation(sector, cov0, conj, lat)) / 2
        if abs(occ - round(occ)) > 1e-9:
            raise AssertionError(f"pair ({a},{b}) has indefinite occupation after the swaps")
        pairing.append((a, b, p, int(round(occ))))

    w = lat.flux_string(pc)
    diag_string = lat.fermion_density_string(s0, s1, path)
    loop_raw = w * diag_string
    cov_psi0 = gaussian.initial_covariance(lat, sector, pairing)
    val0 = gaussian.pauli_expectation(sector, cov_psi0, loop_raw.with_phase(1), lat) * loop_raw.phase
    loop_op = loop_raw if complex(val0).real > 0 else -loop_raw
    e_string = protocols.anyon_creation_string(lat, "e", pc)
    return {
        "plaquette": pc,
        "diagonal": (s0, s1, path),
        "swap_bonds": swap_bonds,
        "pairing": pairing,
        "loop": loop_op,
        "e_string": e_string,
    }


# -- expectation helpers ------------------------------------------------------


def _string_expectation_tableau(t: stabilizer.Tableau, p: PauliString) -> complex:
    return p.phase * t.pauli_expectation(p.with_phase(1))


def _string_expectation_dense(sv: StateVector, p: PauliString) -> complex:
    herm = p.with_phase(1)
    bra = sv.psi
    ket = sv.copy().apply_pauli(herm).psi
    return p.phase * complex(np.vdot(bra, ket))


# -- drivers -------------------------------------------------------------------


def run_imaging(plan: ExperimentPlan) -> ResultTable:
    if plan.experiment != "imaging":
        raise ValueError("plan is not an imaging plan")
    lat = build_patch(plan.geometry)
    engine = select_engine(plan, lat, needs_controlled=False)
    state = imaging_state(lat)
    table = ResultTable("imaging", meta=_base_meta(plan, lat, engine))
    n = max(s.id for s in lat.sites) + 1
    bulk = state["bulk"]
    edge = state["edge"]
    s_bulk = lat.fermion_density_string(*bulk)
    s_edge = lat.fermion_density_string(edge[0], edge[1], lat.shortest_path(*edge))
    perm = protocols.cycle_site_permutation(lat)

    for real in range(plan.disorder_realizations):
        params = _drive_params(plan, lat, real)
        one = floquet_drive(lat, params, 1)
        one_inv = one.inverse()
        if engine == "stabilizer":
            t = stabilizer.Tableau(n).apply(protocols.flux_free_prep(lat))
            for g in pauli_gates(state["toggle"]):
                t.apply(Circuit(n).append(g))
            get = lambda p: float(_string_expectation_tableau(t, p).real)
            step = lambda: t.apply(one)
        elif engine == "gaussian":
            sector = gaussian.sector_from_fluxes(lat)
            occupied = {frozenset(bulk), frozenset(edge)}
            pairing = [
                (a, b, p, 1 if frozenset((a, b)) in occupied else 0)
                for a, b, p in protocols.pairing_plan(lat)
            ]
            cov = gaussian.initial_covariance(lat, sector, pairing)
            rotn = gaussian.cycle_rotation(sector, plan.jt, lat)
            holder = {"cov": cov}
            get = lambda p: gaussian.pauli_expectation(sector, holder["cov"], p, lat)
            step = lambda: holder.__setitem__("cov", gaussian.evolve(holder["cov"], rotn, 1))
        else:
            sv = StateVector(n, cap=plan.qubit_cap)
            sv.apply_circuit(protocols.flux_free_prep(lat))
            sv.apply_pauli(state["toggle"].with_phase(1))
            get = lambda p: float(_string_expectation_dense(sv, p).real)
            step = lambda: sv.apply_circuit(one)

        # the exact Heisenberg-propagated bond needs a Clifford drive; away
        # from the fixed point the probe is the density at the JT=1-permuted
        # positions along canonical paths
        clifford = _snapped_jt1(plan.jt) and not any(abs(v) > 0 for v in (params.h or {}).values())
        prop_edge = s_edge
        pos = edge
        for cycle in range(plan.n_cycles + 1):
            for p in range(len(lat.plaquettes)):
                table.add(cycle, f"flux:{p}", get(lat.flux_string(p)), realization=real)
            table.add(cycle, "bulk_density", (1 + get(s_bulk)) / 2, realization=real)
            table.add(
                cycle, "edge_density_propagated", (1 + get(prop_edge)) / 2, realization=real
            )
            table.add(cycle, "edge_site_a", pos[0], realization=real)
            table.add(cycle, "edge_site_b", pos[1], realization=real)
            if cycle < plan.n_cycles:
                step()
                pos = (perm[pos[0]], perm[pos[1]])
                if clifford:
                    prop_edge = stabilizer.conjugate_string(prop_edge, one_inv)
                else:
                    prop_edge = lat.fermion_density_string(
                        pos[0], pos[1], lat.shortest_path(pos[0], pos[1])
                    )
    return table


def braid_orientation(lat: Lattice) -> tuple:
    """(toggle string, occupy: bool): orientation of the stretched pair such
    that the first exchange accumulates the phase +pi/2 (Fig. 2d convention)."""
    a, b = protocols.stretched_pair(lat)
    toggle = protocols.occupation_toggle(lat, a)
    one = floquet_drive(lat, DriveParams(jt=1.0), 1)
    perm = protocols.cycle_site_permutation(lat)
    orbit = protocols.orbit_of(perm, a)
    half = len(orbit) // 2
    t = stabilizer.Tableau(max(s.id for s in lat.sites) + 1).apply(protocols.flux_free_prep(lat))
    q = toggle
    for _ in range(half):
        q = stabilizer.conjugate_string(q, one)
    val = _string_expectation_tableau(t, q * toggle)
    return toggle, complex(val).imag < 0


def run_braiding(plan: ExperimentPlan) -> ResultTable:
    if plan.experiment != "braiding":
        raise ValueError("plan is not a braiding plan")
    lat = build_patch(plan.geometry)
    if lat.ancilla is None:
        raise ValueError(f"{lat.name}: braiding needs an ancilla site")
    anc = lat.ancilla
    engine = select_engine(plan, lat, needs_controlled=True)
    table = ResultTable("braiding", meta=_base_meta(plan, lat, engine))
    n = max(s.id for s in lat.sites) + 1
    toggle, occupy = braid_orientation(lat)
    prep = protocols.flux_free_prep(lat)
    if occupy:
        for g in pauli_gates(toggle):
            prep.append(g)

    exact = plan.shots == 0 and plan.trajectories == 0 and (plan.noise is None or plan.noise.silent)
    if exact and engine in ("stabilizer", "dense"):
        xa = PauliString.single(anc, "X")
        ya = PauliString.single(anc, "Y")
        head = Circuit(n)
        head.extend(prep)
        head.append(hadamard(anc))
        head.append(cpauli(anc, toggle))
        post = Circuit(n).append(cpauli(anc, toggle))
        one = floquet_drive(lat, _drive_params(plan, lat, 0), 1)
        if engine == "stabilizer":
            base = stabilizer.Tableau(n).apply(head)
            for cycle in range(plan.n_cycles + 1):
                work = base.copy().apply(post)
                table.add(cycle, "overlap_re", work.pauli_expectation(xa))
                table.add(cycle, "overlap_im", work.pauli_expectation(ya))
                base.apply(one)
        else:
            base = StateVector(n, cap=plan.qubit_cap).apply_circuit(head)
            for cycle in range(plan.n_cycles + 1):
                work = base.copy().apply_circuit(post)
                table.add(cycle, "overlap_re", work.expectation(xa))
                table.add(cycle, "overlap_im", work.expectation(ya))
                base.apply_circuit(one)
        return table
    if plan.trajectories > 0:
        return _run_braiding_trajectories(plan, lat, table, prep, toggle)
    # sampled noiseless pipeline with twirling and post-selection
    return _run_braiding_sampled(plan, lat, table, prep, toggle)


def _run_braiding_trajectories(plan, lat, table, prep, toggle) -> ResultTable:
    """Quantum-trajectory estimate of the braiding overlap under the noise
    model: one stochastic evolution per trajectory, sampling the ancilla in
    both bases after every cycle with readout flips."""
    from .dense import _amplitude_damp, _depol_pair

    n = max(s.id for s in lat.sites) + 1
    anc = lat.ancilla
    noise = plan.noise or NoiseModel()
    n_traj = plan.trajectories
    n_cyc = plan.n_cycles
    head = Circuit(n)
    head.extend(prep)
    head.append(hadamard(anc))
    head.append(cpauli(anc, toggle))
    one = floquet_drive(lat, _drive_params(plan, lat, 0), 1)
    post = cpauli(anc, toggle)
    basis = {"x": _ancilla_basis_circuit(n, anc, "x"), "y": _ancilla_basis_circuit(n, anc, "y")}
    acc = {k: np.zeros(n_cyc + 1) for k in ("x", "y")}

    def run_noisy(sv, circuit, rng):
        for gate in circuit.gates:
            sv.apply_gate(gate)
            if gate.kind == "cphase":
                a, b = gate.targets
                p = noise.p_depol_per_bond.get(
                    (a, b), noise.p_depol_per_bond.get((b, a), noise.p_depol)
                )
                _depol_pair(sv, a, b, rng, p)

    def read_ancilla(sv, rng):
        p1 = sv.bit_probability(anc)
        bit = 1 if rng.random() < p1 else 0
        if bit == 0 and rng.random() < noise.readout_p10:
            bit = 1
        elif bit == 1 and rng.random() < noise.readout_p01:
            bit = 0
        return 1 - 2 * bit

    for t in range(n_traj):
        rng = np.random.default_rng((plan.seed, t))
        sv = StateVector(n, cap=plan.qubit_cap)
        run_noisy(sv, head, rng)
        for cycle in range(n_cyc + 1):
            for which in ("x", "y"):
                work = sv.copy()
                work.apply_gate(post)
                work.apply_circuit(basis[which])
                acc[which][cycle] += read_ancilla(work, rng)
            if cycle < n_cyc:
                run_noisy(sv, one, rng)
                for q in noise.damped_sites:
                    _amplitude_damp(sv, q, noise.gamma, rng)
    for cycle in range(n_cyc + 1):
        table.add(cycle, "overlap_re", acc["x"][cycle] / n_traj)
        table.add(cycle, "overlap_im", acc["y"][cycle] / n_traj)
    return table


def _ancilla_basis_circuit(n: int, anc: int, which: str) -> Circuit:
    c = Circuit(n)
    if which == "x":
        c.append(hadamard(anc))
    else:  # rotate Y to Z: forward conjugation by Rx(+pi/2)
        c.append(rot(anc, "x", math.pi / 2))
    return c


def _run_braiding_sampled(plan, lat, table, prep, toggle) -> ResultTable:
    from .circuits import cpauli

    n = max(s.id for s in lat.sites) + 1
    anc = lat.ancilla
    noise = plan.noise or NoiseModel()
    coflux = None
    if plan.postselect_plaquettes:
        coflux = protocols.coflux_measurement_plan(lat, plan.postselect_plaquettes)
    n_traj = plan.trajectories or max(plan.shots, 1)
    for cycle in range(plan.n_cycles + 1):
        drive = floquet_drive(lat, _drive_params(plan, lat, 0), cycle)
        circuit = hadamard_test(prep.copy(), toggle, drive, toggle, anc)
        circuit = dynamical_decoupling(circuit, [anc], seed_of(plan.seed, "dd", cycle))
        for which, name in (("x", "overlap_re"), ("y", "overlap_im")):
            basis = _ancilla_basis_circuit(n, anc, which)
            if coflux is not None:
                basis = basis.copy().extend(coflux.basis_change)
            measured = [anc] + sorted(
                {q for _, qs in (coflux.decoders.values() if coflux else []) for q in qs}
            )
            per_twirl = []
            retention = []
            for tw in range(plan.twirls):
                tw_circuit = randomized_compile(circuit, seed_of(plan.seed, "twirl", cycle, tw))
                if plan.noise is not None and not plan.noise.silent:
                    obs = {"a": (1, (anc,))}
                    plan_obj = MeasurementPlan(basis_change=basis, observables=obs)
                    res = run_trajectories(
                        tw_circuit, noise, n_traj, seed_of(plan.seed, "traj", cycle, tw, which),
                        plan=plan_obj,
                    )
                    per_twirl.append(res["a"][0])
                    retention.append(1.0)
                else:
                    t = stabilizer.Tableau(n).apply(tw_circuit)
                    shot_table = stabilizer.sample_shots(
                        t, basis, measured, max(plan.shots, 1),
                        seed_of(plan.seed, "shots", cycle, tw, which), twirl_id=tw,
                    )
                    st = analysis.ShotTable(
                        qubits=shot_table.qubits, bits=shot_table.bits,
                        twirl=shot_table.twirl, disorder=shot_table.disorder,
                        trajectory=shot_table.trajectory,
                    )
                    if coflux is not None:
                        st, kept = analysis.postselect(
                            st, coflux, {p: 1 for p in plan.postselect_plaquettes}
                        )
                        retention.append(kept)
                    else:
                        retention.append(1.0)
                    vals = st.bit_products(1, (anc,))
                    per_twirl.append(float(vals.mean()) if len(vals) else 0.0)
            if plan.twirls > 1:
                est = analysis.jackknife(np.array(per_twirl))
                table.add(cycle, name, est.mean)
                table.add(cycle, name + "_sigma", est.sigma)
            else:
                table.add(cycle, name, per_twirl[0])
            table.add(cycle, f"retention_{which}", float(np.mean(retention)))
    return table


def spectral_base(lat: Lattice) -> int:
    bond = lat.bonds[lat.protruding["bond"]]
    return bond.other(lat.protruding["site"])


def run_spectral(plan: ExperimentPlan) -> ResultTable:
    if plan.experiment != "spectral":
        raise ValueError("plan is not a spectral plan")
    lat = build_patch(plan.geometry)
    if lat.protruding is None:
        raise ValueError(f"{lat.name}: spectral runs need a protruding bond")
    engine = select_engine(plan, lat, needs_controlled=(plan.delta > 0))
    if engine == "stabilizer":
        engine = "gaussian"  # same exact values; the Gaussian form is direct
    table = ResultTable("spectral", meta=_base_meta(plan, lat, engine))
    base = spectral_base(lat)
    edge = lat.edge_sites()

    if engine == "gaussian":
        sector = gaussian.sector_from_fluxes(lat)
        pairing = [(a, b, p, 1 if lat.protruding["site"] in (a, b) else 0)
                   for a, b, p in protocols.pairing_plan(lat)]
        cov = gaussian.initial_covariance(lat, sector, pairing)
        rotn = gaussian.cycle_rotation(sector, plan.jt, lat)
        for cycle in range(plan.n_cycles + 1):
            for j in edge:
                val = gaussian.unequal_time_correlator(sector, cov, j, base, cycle, rotn)
                table.add(cycle, f"C:{j}", val.real)
                table.add(cycle, f"C_im:{j}", val.imag)
        return table

    # dense: full Hadamard-test estimator, averaged over disorder realizations
    n = max(s.id for s in lat.sites) + 1
    anc = n
    if n + 1 > plan.qubit_cap:
        raise EngineError(f"dense spectral needs {n + 1} qubits > cap {plan.qubit_cap}")
    for real in range(plan.disorder_realizations):
        params = _drive_params(plan, lat, real)
        prep = protocols.flux_free_prep(lat)
        for g in protocols.spectral_occupy_gates(lat):
            prep.append(g)
        sv0 = StateVector(n + 1, cap=plan.qubit_cap)
        c0 = Circuit(n + 1)
        c0.extend(prep)
        c0.append(hadamard(anc))
        p0 = protocols.probe_strings(lat, base)[0]
        c0.append(cpauli(anc, p0))
        sv0.apply_circuit(c0)
        one = floquet_drive(lat, params, 1)
        for cycle in range(plan.n_cycles + 1):
            for j in edge:
                pj = protocols.probe_strings(lat, j)[1]
                work = sv0.copy()
                work.apply_circuit(Circuit(n + 1).append(cpauli(anc, pj)))
                re = work.expectation(PauliString.single(anc, "X"))
                im = work.expectation(PauliString.single(anc, "Y"))
                table.add(cycle, f"C:{j}", re, realization=real)
                table.add(cycle, f"C_im:{j}", im, realization=real)
            sv0.apply_circuit(one)
    return table


def run_transmutation(plan: ExperimentPlan) -> ResultTable:
    if plan.experiment != "transmutation":
        raise ValueError("plan is not a transmutation plan")
    lat = build_patch(plan.geometry)
    engine = select_engine(plan, lat, needs_controlled=False)
    state = transmutation_state(lat)
    table = ResultTable("transmutation", meta=_base_meta(plan, lat, engine))
    table.meta["loop_plaquette"] = state["plaquette"]
    n = max(s.id for s in lat.sites) + 1
    loop = state["loop"]
    e_string = state["e_string"]

    if engine == "gaussian" or engine == "stabilizer":
        # both initial states are Gaussian; the tableau route gives the same
        # exact values at JT=1 and the Gaussian route covers any clean JT
        sector0 = gaussian.sector_from_fluxes(lat)
        pairing0 = state["pairing"]
        cov0 = gaussian.initial_covariance(lat, sector0, pairing0)
        rot0 = gaussian.cycle_rotation(sector0, plan.jt, lat)
        sector_e = gaussian.sector_from_fluxes(lat, {state["plaquette"]: -1})
        # the anyon string flips the occupation of every pairing whose
        # density it anticommutes with (the central diagonal, plus any
        # stretched pair whose gauge string crosses the chain)
        pairing_e = []
        for a, b, p, occ in pairing0:
            density = lat.fermion_density_string(a, b, p)
            flipped = not e_string.commutes(density)
            pairing_e.append((a, b, p, 1 - occ if flipped else occ))
        cov_e = gaussian.initial_covariance(lat, sector_e, pairing_e)
        rot_e = gaussian.cycle_rotation(sector_e, plan.jt, lat)
        ge, g0 = cov_e, cov0
        for cycle in range(plan.n_cycles + 1):
            table.add(cycle, "loop_0", gaussian.pauli_expectation(sector0, g0, loop, lat))
            table.add(cycle, "loop_e", gaussian.pauli_expectation(sector_e, ge, loop, lat))
            g0 = gaussian.evolve(g0, rot0, 1)
            ge = gaussian.evolve(ge, rot_e, 1)
        return table

    # dense: disordered or noisy runs, one pair of states per realization
    if n > plan.qubit_cap:
        raise EngineError(f"dense transmutation needs {n} qubits > cap {plan.qubit_cap}")
    prep = protocols.flux_free_prep(lat)
    swaps = mswap_circuit(lat, state["swap_bonds"])
    for real in range(plan.disorder_realizations):
        params = _drive_params(plan, lat, real)
        one = floquet_drive(lat, params, 1)
        sv0 = StateVector(n, cap=plan.qubit_cap)
        sv0.apply_circuit(prep)
        sv0.apply_circuit(swaps)
        sve = sv0.copy()
        sve.apply_pauli(e_string.with_phase(1))
        for cycle in range(plan.n_cycles + 1):
            table.add(cycle, "loop_0", float(_string_expectation_dense(sv0, loop).real),
                      realization=real)
            table.add(cycle, "loop_e", float(_string_expectation_dense(sve, loop).real),
                      realization=real)
            if cycle < plan.n_cycles:
                sv0.apply_circuit(one)
                sve.apply_circuit(one)
    return table


RUNNERS = {
    "imaging": run_imaging,
    "braiding": run_braiding,
    "spectral": run_spectral,
    "transmutation": run_transmutation,
}


def run_experiment(plan: ExperimentPlan) -> ResultTable:
    return RUNNERS[plan.experiment](plan)
