"""Command line front end: geometry validation, experiment execution,
analysis, and desk-scale figure-data reproduction.

Subcommands: ``geometry | run | analyze | reproduce``.  Run configuration is
a TOML file; every ``--key=value`` flag overrides the matching config key.
Exit codes: 0 ok, 2 configuration error, 3 engine cap or resource error.
Output CSVs carry the manifest hash in a leading comment line; identical
configuration and seed give byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

import numpy as np

from . import analysis, protocols
from .dense import NoiseModel, QubitCapError
from .experiments import (
    EngineError,
    ExperimentPlan,
    ResultTable,
    geometry_hash,
    run_experiment,
    spectral_base,
)
from .lattice import (
    BUILTIN_GEOMETRIES,
    GeometryError,
    build_patch,
    count_mismatches,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RESOURCE = 3

OUTPUT_ROOT_ENV = "FLOQKIT_OUTPUT_ROOT"

FIGURE_IDS = ("fig1b", "fig2d", "fig3e", "fig4c", "fig4e", "edf8", "edf9")

_PLAN_KEYS = {
    "experiment": str,
    "geometry": str,
    "jt": float,
    "delta": float,
    "cycles": int,
    "engine": str,
    "shots": int,
    "twirls": int,
    "disorder_realizations": int,
    "trajectories": int,
    "seed": int,
    "qubit_cap": int,
}


class ConfigError(ValueError):
    pass


def _output_root(arg) -> Path:
    if arg:
        return Path(arg)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "floqkit-results"))


def manifest_hash(manifest: dict) -> str:
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_outputs(outdir: Path, name: str, table: ResultTable, manifest: dict):
    outdir.mkdir(parents=True, exist_ok=True)
    h = manifest_hash(manifest)
    (outdir / f"{name}.csv").write_text(table.to_csv_text(header_comment=f"manifest_hash={h}"))
    (outdir / f"{name}.manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n"
    )


def plan_from_config(cfg: dict) -> ExperimentPlan:
    unknown = set(cfg) - set(_PLAN_KEYS) - {"noise", "postselect_plaquettes", "output"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, cast in _PLAN_KEYS.items():
        if key in cfg:
            try:
                kwargs[key] = cast(cfg[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {cfg[key]!r}") from exc
    if "postselect_plaquettes" in cfg:
        kwargs["postselect_plaquettes"] = tuple(int(p) for p in cfg["postselect_plaquettes"])
    if "noise" in cfg:
        nz = dict(cfg["noise"])
        per_bond = {
            tuple(int(x) for x in k.split("-")): float(v)
            for k, v in nz.pop("p_depol_per_bond", {}).items()
        }
        try:
            kwargs["noise"] = NoiseModel(
                p_depol=float(nz.pop("p_depol", 0.0)),
                p_depol_per_bond=per_bond,
                gamma=float(nz.pop("gamma", 0.0)),
                damped_sites=tuple(int(s) for s in nz.pop("damped_sites", ())),
                readout_p10=float(nz.pop("readout_p10", 0.0)),
                readout_p01=float(nz.pop("readout_p01", 0.0)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if nz:
            raise ConfigError(f"unknown noise keys: {sorted(nz)}")
    if "experiment" not in kwargs:
        raise ConfigError("config must set 'experiment'")
    try:
        return ExperimentPlan(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _apply_overrides(cfg: dict, overrides) -> dict:
    out = dict(cfg)
    for text in overrides or ():
        if not text.startswith("--") or "=" not in text:
            raise ConfigError(f"overrides use --key=value, got {text!r}")
        key, _, value = text[2:].partition("=")
        key = key.replace("-", "_")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


# -- subcommands ---------------------------------------------------------


def cmd_geometry(args) -> int:
    try:
        lat = build_patch(args.name)
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    driven = len(lat.driven_sites)
    print(f"{lat.name or args.name}: {lat.n_sites} sites, {driven} driven sites, "
          f"{len(lat.bonds)} bonds, {len(lat.plaquettes)} plaquettes, "
          f"edge length {len(lat.edge_cycle)}")
    if lat.protruding is not None:
        print(f"protruding site {lat.protruding['site']} on bond {lat.protruding['bond']}")
    if lat.ancilla is not None:
        print(f"ancilla site {lat.ancilla}")
    zp, leftover = lat.z_matching()
    print(f"z-bond pairs: {len(zp)}, leftover sites: {leftover}")
    for line in count_mismatches(lat):
        print(f"NOTE: {line}")
    note = None
    try:
        from .lattice import load_geometry_dict

        note = load_geometry_dict(args.name).get("reconstruction_note")
    except GeometryError:
        pass
    if note:
        print(f"NOTE: {note}")
    print("validation: ok")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = {}
        if args.config:
            cfg = tomllib.loads(Path(args.config).read_text())
        cfg = _apply_overrides(cfg, args.override)
        outdir = _output_root(args.output or cfg.get("output"))
        plan = plan_from_config(cfg)
    except (ConfigError, FileNotFoundError, tomllib.TOMLDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = run_experiment(plan)
    except (EngineError, QubitCapError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (GeometryError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    manifest = dict(table.meta)
    manifest["kind"] = "run"
    write_outputs(outdir, plan.experiment, table, manifest)
    print(f"wrote {outdir / (plan.experiment + '.csv')}")
    return EXIT_OK


def _read_result(path: Path) -> ResultTable:
    table = ResultTable(path.stem)
    for line in path.read_text().splitlines():
        if line.startswith("#") or line.startswith("cycle,") or not line.strip():
            continue
        cycle, obs, twirl, realization, value = line.split(",")
        table.rows.append(
            {
                "cycle": int(cycle),
                "observable": obs,
                "twirl": int(twirl),
                "realization": int(realization),
                "value": float(value),
            }
        )
    return table


def cmd_analyze(args) -> int:
    indir = Path(args.results)
    csvs = sorted(indir.glob("*.csv"))
    csvs = [c for c in csvs if not c.name.endswith(".analysis.csv")]
    if not csvs:
        print(f"config error: no result CSVs in {indir}", file=sys.stderr)
        return EXIT_CONFIG
    wrote = []
    for path in csvs:
        table = _read_result(path)
        man_path = path.with_suffix(".manifest.json")
        manifest = json.loads(man_path.read_text()) if man_path.exists() else {}
        h = manifest_hash(manifest)
        if args.mode == "eta":
            if not any(r["observable"] == "loop_e" for r in table.rows):
                continue
            reals = sorted({r["realization"] for r in table.rows})
            rows = ["cycle,eta_mean,eta_2sigma"]
            if len(reals) > 1:
                per = np.array([table.series("loop_e", realization=k) for k in reals])
                per0 = np.array([table.series("loop_0", realization=k) for k in reals])
                ests = analysis.eta_series(per, per0)
            else:
                ests = analysis.eta_series(table.series("loop_e"), table.series("loop_0"))
            for cyc, est in enumerate(ests):
                rows.append(f"{cyc},{est.mean!r},{est.two_sigma!r}")
            out = path.with_suffix(".eta.analysis.csv")
            out.write_text(f"# manifest_hash={h}\n" + "\n".join(rows) + "\n")
            wrote.append(out)
        elif args.mode == "spectrum":
            obs = [o for o in table.observables() if o.startswith("C:")]
            if not obs:
                continue
            geometry = manifest.get("plan", {}).get("geometry")
            if geometry is None:
                print(f"config error: {man_path} lacks the plan geometry", file=sys.stderr)
                return EXIT_CONFIG
            lat = build_patch(geometry)
            edge = lat.edge_sites()
            nxt, signs = protocols.edge_translation(lat)
            c = np.array(
                [
                    table.series(f"C:{j}") + 1j * table.series(f"C_im:{j}")
                    for j in edge
                ]
            )
            qs, omegas, spec, weight, cyc = analysis.momentum_transform(
                c, edge, translation=nxt, signs=signs
            )
            rows = ["q,omega,magnitude"]
            for i, q in enumerate(qs):
                for k, w in enumerate(omegas):
                    rows.append(f"{float(q)!r},{float(w)!r},{float(abs(spec[i, k]))!r}")
            out = path.with_suffix(".spectrum.analysis.csv")
            out.write_text(f"# manifest_hash={h}\n" + "\n".join(rows) + "\n")
            wrote.append(out)
        else:
            print(f"config error: unknown analyze mode {args.mode!r}", file=sys.stderr)
            return EXIT_CONFIG
    if not wrote:
        print("config error: no tables matched the requested mode", file=sys.stderr)
        return EXIT_CONFIG
    for w in wrote:
        print(f"wrote {w}")
    return EXIT_OK


# -- figure reproduction ---------------------------------------------------


def _reproduce_plans(figure: str, seed: int) -> tuple:
    """(plans keyed by output name, desk-scale substitution notes)."""
    plans, notes = {}, []
    if figure == "fig1b":
        plans["fig1b_imaging"] = ExperimentPlan(
            experiment="imaging", geometry="ring1", jt=1.0, cycles=10, seed=seed
        )
    elif figure == "fig2d":
        plans["fig2d_braiding"] = ExperimentPlan(
            experiment="braiding", geometry="ring1+ancilla", jt=1.0, cycles=20, seed=seed
        )
    elif figure == "fig3e":
        for jt in (1.0, 0.9, 0.5):
            plans[f"fig3e_jt{jt}"] = ExperimentPlan(
                experiment="spectral", geometry="ring1+probe", jt=jt, engine="gaussian",
                cycles=20, seed=seed,
            )
        plans["fig3e_jt1.0_delta0.1"] = ExperimentPlan(
            experiment="spectral", geometry="hex3+probe", jt=1.0, delta=0.1,
            disorder_realizations=20, cycles=20, seed=seed,
        )
        notes.append("fig3e disorder panel runs on the 14-site hex3+probe patch, not 27 qubits")
    elif figure == "fig4c":
        for jt in (1.0, 0.9, 0.5):
            plans[f"fig4c_jt{jt}"] = ExperimentPlan(
                experiment="transmutation", geometry="ring3", jt=jt, engine="gaussian",
                cycles=20, seed=seed,
            )
        plans["fig4c_jt1.0_delta0.2"] = ExperimentPlan(
            experiment="transmutation", geometry="hex3", jt=1.0, delta=0.2,
            disorder_realizations=20, cycles=20, seed=seed,
        )
        notes.append("fig4c disorder panel runs on the 14-site hex3 patch, not 58 qubits")
    elif figure == "fig4e":
        for jt in (1.0, 0.9, 0.8, 0.5, 0.4):
            plans[f"fig4e_jt{jt}_delta0"] = ExperimentPlan(
                experiment="transmutation", geometry="ring3", jt=jt, engine="gaussian",
                cycles=20, seed=seed,
            )
            for delta in (0.1, 0.2):
                plans[f"fig4e_jt{jt}_delta{delta}"] = ExperimentPlan(
                    experiment="transmutation", geometry="hex3", jt=jt, delta=delta,
                    disorder_realizations=10, cycles=12, seed=seed,
                )
        notes.append("fig4e disordered cells run on the 14-site hex3 patch, not 58 qubits")
    elif figure == "edf8":
        for jt in (1.0, 0.9, 0.5):
            plans[f"edf8_jt{jt}"] = ExperimentPlan(
                experiment="transmutation", geometry="ring3", jt=jt, engine="gaussian",
                cycles=20, seed=seed,
            )
    elif figure == "edf9":
        for delta in (0.1, 0.3, 0.6, 1.0):
            plans[f"edf9_delta{delta}"] = ExperimentPlan(
                experiment="transmutation", geometry="hex3", jt=1.0, delta=delta,
                disorder_realizations=10, cycles=12, seed=seed,
            )
        notes.append("edf9 disorder sweep runs on the 14-site hex3 patch with 10 realizations")
    else:
        raise ConfigError(f"unknown figure id {figure!r}; valid ids: {', '.join(FIGURE_IDS)}")
    return plans, notes


def _run_one(item):
    name, plan = item
    return name, run_experiment(plan)


def cmd_reproduce(args) -> int:
    try:
        plans, notes = _reproduce_plans(args.figure, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    outdir = _output_root(args.output) / args.figure
    workers = args.workers or os.cpu_count() or 1
    items = sorted(plans.items())
    try:
        if workers > 1 and len(items) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = dict(pool.map(_run_one, items))
        else:
            results = dict(map(_run_one, items))
    except (EngineError, QubitCapError) as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    for name, _plan in items:
        table = results[name]
        manifest = dict(table.meta)
        manifest["kind"] = "reproduce"
        manifest["figure"] = args.figure
        manifest["substitutions"] = notes
        write_outputs(outdir, name, table, manifest)
    # summary analysis for the phase-diagram figure
    if args.figure == "fig4e":
        rows = ["jt,delta,indicator"]
        for name, plan in items:
            table = results[name]
            reals = sorted({r["realization"] for r in table.rows})
            etas = []
            for k in reals:
                l0 = table.series("loop_0", realization=k)
                le = table.series("loop_e", realization=k)
                etas.append(le / (l0 + analysis.ETA_SHIFT))
            eta = np.mean(etas, axis=0)
            rows.append(f"{plan.jt},{plan.delta},{analysis.phase_indicator(eta)!r}")
        summary = "\n".join(rows) + "\n"
        h = manifest_hash({"figure": "fig4e", "seed": args.seed, "substitutions": notes})
        (outdir / "fig4e_indicator.csv").write_text(f"# manifest_hash={h}\n" + summary)
    print(f"wrote {len(items)} tables to {outdir}")
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="floqkit", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geometry", help="validate and summarize a patch")
    g.add_argument("name", help=f"builtin ({', '.join(BUILTIN_GEOMETRIES)}) or geometry file")
    g.set_defaults(func=cmd_geometry)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("--config", help="TOML configuration file")
    r.add_argument("--output", help="output directory")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="post-process a results directory")
    a.add_argument("results", help="directory holding result CSVs")
    a.add_argument("--mode", required=True, choices=("eta", "spectrum"))
    a.set_defaults(func=cmd_analyze)

    p = sub.add_parser("reproduce", help="desk-scale figure data with pinned seeds")
    p.add_argument("figure", help=f"one of {', '.join(FIGURE_IDS)}")
    p.add_argument("--output", help="output root directory")
    p.add_argument("--seed", type=int, default=2026)
    p.add_argument("--workers", type=int, default=0, help="parallel plan fan-out (0 = cores)")
    p.set_defaults(func=cmd_reproduce)

    args, extra = ap.parse_known_args(argv)
    if args.command == "run":
        args.override = extra
    elif extra:
        ap.error(f"unrecognized arguments: {' '.join(extra)}")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
