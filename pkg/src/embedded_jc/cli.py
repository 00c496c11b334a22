"""``embedded-jc`` command line: estimate, spectrum, dynamics, gate, sweep.

Every command computes all of its outputs in memory first and writes files
only after success, so a failed run leaves no partial files.
Exit codes: 0 ok, 2 config/usage, 3 resource cap, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import itertools
import logging
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import MAX_SWEEP_POINTS, ConfigError, RunConfig, load_config, set_path, validate
from .dynamics import (
    ContractError,
    FitError,
    IntegrationError,
    basis_vector,
    evolve_lindblad,
    evolve_unitary,
    fit_decay,
    standard_observables,
    NORM_TOL,
    RTOL_LINDBLAD,
    TRACE_TOL,
)
from .gates import TRANSMON, RegimeError, evaluate_gate, exchange_schedule, schedule_to_json, transfer_schedule
from .hamiltonian import HermiticityError, build_collapse_ops, build_hamiltonian
from .hilbert import DimensionError, SpaceTruncation, enumerate_basis
from .params import (
    Ensemble,
    ParameterError,
    SystemParams,
    classify_regime,
    collective_coupling,
    magnetic_coupling,
    max_electric_coupling,
    spin_count,
    thermal_occupation,
    to_dimensionless,
)
from .spectra import DoubletError, NumericalError, anharmonicity, eigensystem, embedded_jc_analysis, jc_ladder, manifold_gap

log = logging.getLogger("embedded_jc")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4

QUOTED_G_M = 1e3  # rad/s, the order-of-magnitude value quoted for the silicon scenario


def _sim_params(cfg: RunConfig) -> tuple[SystemParams, float]:
    p = cfg.params()
    if cfg.mode == "SI":
        return to_dimensionless(p)
    return p, 1.0


def _basis(cfg: RunConfig, params: SystemParams, trunc: SpaceTruncation | None = None):
    trunc = trunc or cfg.truncation()
    return enumerate_basis(trunc, params.ensembles, cap=cfg.dimension_cap())


def _metadata(cfg: RunConfig, command: str, extra=None) -> dict:
    meta = {
        "version": io.VERSION,
        "command": command,
        "mode": cfg.mode,
        "params": cfg.raw.get("params"),
        "truncation": cfg.raw.get("truncation"),
        "tolerances": {"norm": NORM_TOL, "trace": TRACE_TOL, "lindblad_rtol": RTOL_LINDBLAD},
        "seed": cfg.seed,
    }
    if extra:
        meta.update(extra)
    return meta


# --- estimate ---------------------------------------------------------------

def estimate_report(section: dict) -> dict:
    e = section
    omega_c = e["omega_c"]
    g_c = e.get("g_c") or max_electric_coupling(omega_c)
    g_m = magnetic_coupling(omega_c, g_c, e["V_c"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        N_s = spin_count(e["density_cm3"], e["thickness"], e["width"], e["length"])
    if N_s < 1:
        raise ConfigError("the slab contains no spins (density * volume < 1)")
    quoted = e.get("quoted_g_m", QUOTED_G_M)
    rates = {k: e.get(k, 0.0) for k in ("kappa_c", "gamma_JJ", "gamma_spin")}
    params = SystemParams(
        g_c=g_c, g_m=g_m, ensembles=(Ensemble(N_s, e.get("Delta", 0.0)),), delta=e.get("delta", 0.0),
        omega_c=omega_c, **rates,
    )
    kw = {"hierarchy_factor": e["hierarchy_factor"]} if "hierarchy_factor" in e else {}
    regime = classify_regime(params, **kw)
    decoherence = max(rates.values())
    anh_unit = math.sqrt(2) - 1

    def n_threshold(g):
        return (decoherence / (g * anh_unit)) ** 2 if g > 0 else math.inf

    ratio = g_m / quoted
    return {
        "g_c_limit": max_electric_coupling(omega_c),
        "g_c": g_c,
        "g_m": g_m,
        "g_m_quoted": quoted,
        "g_m_ratio_to_quoted": ratio,
        "g_m_order_of_magnitude_consistent": abs(math.log10(ratio)) <= 1.0,
        "N_s": N_s,
        "collective_coupling": collective_coupling(g_m, N_s),
        "N_s_two_level_threshold": n_threshold(g_m),
        "N_s_two_level_threshold_quoted_g_m": n_threshold(quoted),
        "regime": regime.to_dict(),
        "thermal_occupation": thermal_occupation(omega_c, e["temperature"]),
        "temperature": e["temperature"],
    }


def cmd_estimate(cfg: RunConfig):
    if cfg.mode != "SI":
        raise ConfigError("estimate requires mode 'SI'")
    rep = estimate_report(cfg.section("estimate"))
    summary = (
        f"g_c = {rep['g_c']:.4g} rad/s  g_m = {rep['g_m']:.4g} rad/s (quoted {rep['g_m_quoted']:.1g})\n"
        f"N_s = {rep['N_s']}  G = {rep['collective_coupling']:.4g} rad/s  "
        f"two-level valid: {rep['regime']['two_level_valid']}\n"
        f"thermal occupation at {rep['temperature']:g} K: {rep['thermal_occupation']:.4g}"
    )
    return {"estimate.json": io.dumps(rep) + "\n"}, summary


# --- spectrum ---------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig):
    params, scale = _sim_params(cfg)
    opts = cfg.raw.get("spectrum", {})
    basis = _basis(cfg, params)
    H = build_hamiltonian(params, basis)
    spec = eigensystem(H, want_vectors=opts.get("vectors", False))
    files = {
        "spectrum.csv": io.csv_text(("block", "index", "eigenvalue"), [(b, i, e * scale) for b, i, e in spec.rows()])
    }
    report = {"dimension": basis.dim, "max_residual": spec.max_residual * scale}
    try:
        report["anharmonicity"] = anharmonicity(spec) * scale
        report["manifold_gap"] = manifold_gap(spec) * scale
    except KeyError:
        report["anharmonicity"] = report["manifold_gap"] = None
    e1, e2 = jc_ladder(params.g_c, params.delta, 1), jc_ladder(params.g_c, params.delta, 2)
    report["jc_reference"] = {
        "ladder_step": ((e2[0] - e1[0]) - e1[0]) * scale,
        "manifold_gap": (e1[0] - e2[0]) * scale,
    }
    if opts.get("embedded", False):
        rep = embedded_jc_analysis(params, basis).to_dict()
        for key in ("doublet_energies", "splitting", "anharmonicity", "expected_splitting", "collective_coupling"):
            v = rep[key]
            if v is not None:
                rep[key] = [x * scale for x in v] if isinstance(v, (list, tuple)) else v * scale
        report["embedded"] = rep
        files["embedded.json"] = io.dumps(rep) + "\n"
    if opts.get("vectors", False):
        files["eigenvectors.json"] = io.dumps(
            {"labels": basis.labels(), "re": spec.eigenvectors.real, "im": spec.eigenvectors.imag}
        ) + "\n"
    if opts.get("dump_basis", False):
        files["basis.json"] = basis.to_json() + "\n"
    if opts.get("dump_operator", False):
        files["hamiltonian.coo.txt"] = H.dump()
    files["spectrum.json"] = io.dumps(report) + "\n"
    summary = f"dimension {basis.dim}; anharmonicity {report['anharmonicity']}"
    if "embedded" in report:
        summary += f"; hybrid splitting {report['embedded']['splitting']:.6g}"
    return files, summary


# --- dynamics ---------------------------------------------------------------

def _time_grid(section: dict, scale: float) -> np.ndarray:
    if "t_grid" in section:
        t = np.asarray(section["t_grid"], dtype=float)
    elif "t_end" in section:
        t = np.linspace(0.0, section["t_end"], section.get("n_points", 201))
    else:
        raise ConfigError("dynamics needs 't_grid' or 't_end'")
    if t.size == 0:
        raise ConfigError("empty time grid")
    if np.any(np.diff(t) < 0):
        raise ConfigError("time grid must be ascending")
    return t * scale


def cmd_dynamics(cfg: RunConfig):
    params, scale = _sim_params(cfg)
    d = cfg.section("dynamics")
    t = _time_grid(d, scale)
    basis = _basis(cfg, params)
    init = d["initial"]
    if len(init["k"]) != len(params.ensembles):
        raise ConfigError("initial.k needs one entry per ensemble")
    try:
        psi0 = basis_vector(basis, init["transmon"], init["photons"], init["k"])
    except KeyError as exc:
        raise ConfigError(f"initial state outside the truncated basis: {exc}") from exc
    kind = d.get("kind", "unitary")
    if kind == "unitary":
        traj = evolve_unitary(build_hamiltonian(params, basis), psi0, t)
    else:
        traj = evolve_lindblad(build_collapse_ops(params, basis), psi0, t)
    obs = standard_observables(traj)
    pops = traj.populations()
    for st in d.get("populations", []):
        i = basis.find(st["transmon"], st["photons"], st["k"])
        if i is None:
            raise ConfigError(f"population state {st} not in basis")
        obs[f"P[{basis.state_at(i).label()}]"] = pops[:, i]
    times = traj.times / scale
    names = list(obs)
    files = {"trajectory.csv": io.csv_text(["t", *names], [(ti, *(obs[n][k] for n in names)) for k, ti in enumerate(times)])}
    extra = {"kind": kind, "observables": names, "n_points": int(t.size)}
    if d.get("fit"):
        name = d["fit"]
        if name not in obs:
            raise ConfigError(f"unknown observable {name!r} for fit; have {names}")
        fr = fit_decay(obs[name], times)
        extra["fit"] = {"observable": name, "rate": fr.rate, "amplitude": fr.amplitude,
                        "offset": fr.offset, "rms_residual": fr.rms_residual}
    files["trajectory.meta.json"] = io.dumps(_metadata(cfg, "dynamics", extra)) + "\n"
    summary = f"{kind} evolution, {t.size} points, dim {basis.dim}"
    if "fit" in extra:
        summary += f"; fitted rate {extra['fit']['rate']:.6g}"
    return files, summary


# --- gate -------------------------------------------------------------------

def gate_report(params: SystemParams, opts: dict):
    if len(params.ensembles) < 2:
        raise ConfigError("gate needs two configured ensembles")
    i, j = opts.get("ensembles", [0, 1])
    if i == j or max(i, j) >= len(params.ensembles):
        raise ConfigError("gate.ensembles must name two distinct configured ensembles")
    target = opts.get("target", "sqrt_swap")
    try:
        if target == "identity":
            schedule = transfer_schedule(params, i, TRANSMON) + transfer_schedule(params, TRANSMON, i)
        else:
            schedule = exchange_schedule(params, i, j, target, calibrated=opts.get("calibrated", True))
    except RegimeError as exc:
        raise ConfigError(f"regime: {exc}") from exc
    report = evaluate_gate(
        schedule, params, target, (i, j), model=opts.get("model", "full"), dissipative=opts.get("dissipative", False)
    )
    return schedule, report


def cmd_gate(cfg: RunConfig):
    params, scale = _sim_params(cfg)
    opts = cfg.raw.get("gate", {})
    schedule, report = gate_report(params, opts)
    out = report.to_dict()
    out["schedule"] = [{"duration": s.duration / scale, "overrides": s.to_dict()["overrides"]} for s in schedule]
    files = {"gate.json": io.dumps(out) + "\n"}
    return files, f"{report.target}: average fidelity {report.average_fidelity:.6f}, leakage {report.leakage:.3e}"


# --- sweep ------------------------------------------------------------------

SWEEP_OUTPUTS = {
    "regime": ["collective_coupling", "anharmonicity_scale", "hierarchy_valid", "resonant_strong_coupling",
               "two_level_valid", "dispersive_strong_coupling", "two_level_ratio"],
    "embedded": ["splitting", "splitting_ratio", "coef_spin", "coef_transmon", "coef_photon", "anharmonicity"],
    "gate": ["average_fidelity", "leakage"],
}


def _point_outputs(raw: dict, command: str) -> dict:
    cfg = validate(raw)
    if command == "regime":
        r = classify_regime(cfg.params())
        d = r.to_dict()
        d["two_level_ratio"] = r.margin_ratios["two_level"]
        return d
    params, scale = _sim_params(cfg)
    if command == "embedded":
        rep = embedded_jc_analysis(params, _basis(cfg, params))
        c = rep.coefficient_magnitudes
        return {
            "splitting": rep.splitting * scale,
            "splitting_ratio": rep.splitting / rep.expected_splitting if rep.expected_splitting else math.nan,
            "coef_spin": c[0], "coef_transmon": c[1], "coef_photon": c[2],
            "anharmonicity": None if rep.anharmonicity is None else rep.anharmonicity * scale,
        }
    _, report = gate_report(params, cfg.raw.get("gate", {}))
    return {"average_fidelity": report.average_fidelity, "leakage": report.leakage}


def _run_point(args):
    raw, command, assignment = args
    doc = copy.deepcopy(raw)
    doc.pop("sweep", None)
    try:
        for path, value in assignment:
            set_path(doc, path, value)
        return _point_outputs(doc, command), ""
    except Exception as exc:  # recorded per point; the sweep continues
        return {}, f"{type(exc).__name__}: {exc}"


def sweep_points(cfg: RunConfig):
    grid = cfg.section("sweep")["grid"]
    keys = list(grid)
    n = math.prod(len(v) for v in grid.values())
    if n > MAX_SWEEP_POINTS:
        raise ConfigError(f"sweep has {n} points, limit is {MAX_SWEEP_POINTS}")
    return keys, [list(zip(keys, combo)) for combo in itertools.product(*grid.values())]


def _workers(n_points: int) -> int:
    cap = os.environ.get("EMBEDDED_JC_THREADS")
    n = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, n_points))


def sweep_rows(cfg: RunConfig, start: int = 0, stop: int | None = None):
    """Yield CSV rows for points [start, stop) in point order."""
    command = cfg.section("sweep")["command"]
    keys, points = sweep_points(cfg)
    outputs = SWEEP_OUTPUTS[command]
    todo = list(range(start, len(points) if stop is None else min(stop, len(points))))
    jobs = [(cfg.raw, command, points[i]) for i in todo]
    workers = _workers(len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_point, jobs))
    else:
        results = [_run_point(j) for j in jobs]
    for i, (res, err) in zip(todo, results):
        yield [i, *(v for _, v in points[i]), *(res.get(o) for o in outputs), err]


def sweep_header(cfg: RunConfig):
    keys, _ = sweep_points(cfg)
    return ["point", *keys, *SWEEP_OUTPUTS[cfg.section("sweep")["command"]], "error"]


def run_sweep(cfg: RunConfig, out_dir: Path, resume: bool = False, max_points: int | None = None) -> str:
    """Write sweep.csv incrementally with a manifest of completed rows."""
    keys, points = sweep_points(cfg)
    csv_path = out_dir / "sweep.csv"
    manifest_path = out_dir / "sweep.manifest.json"
    done = 0
    if resume and manifest_path.exists() and csv_path.exists():
        import json

        man = json.loads(manifest_path.read_text())
        if man.get("config_sha256") != cfg.digest():
            raise ConfigError("resume: manifest belongs to a different configuration")
        done = int(man["completed"])
        # drop any row written after the last manifest update
        lines = csv_path.read_text().splitlines(keepends=True)
        csv_path.write_text("".join(lines[: done + 1]))
    else:
        io.write_text(csv_path, io.csv_text(sweep_header(cfg), []))
    stop = len(points) if max_points is None else min(len(points), done + max_points)
    with csv_path.open("a", encoding="utf-8", newline="") as fh:
        for row in sweep_rows(cfg, done, stop):
            fh.write(io.csv_text([], [row]).split("\n", 1)[1])
            fh.flush()
            done += 1
            manifest_path.write_text(io.dumps({"config_sha256": cfg.digest(), "completed": done, "total": len(points)}) + "\n")
    return f"sweep: {done}/{len(points)} points written to {csv_path}"


# --- entry point ------------------------------------------------------------

COMMANDS = {"estimate": cmd_estimate, "spectrum": cmd_spectrum, "dynamics": cmd_dynamics, "gate": cmd_gate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="embedded-jc", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=[*COMMANDS, "sweep"])
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="dotted-path override, value parsed as JSON when possible")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--resume", action="store_true", help="sweep: continue from the manifest")
    ap.add_argument("--max-points", type=int, help="sweep: stop after this many new points")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        out_dir = Path(args.out or cfg.output_dir)
        if args.command == "sweep":
            cfg.section("sweep")
            sweep_points(cfg)
            print(run_sweep(cfg, out_dir, resume=args.resume, max_points=args.max_points))
            return EXIT_OK
        files, summary = COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionError as exc:
        print(f"error: {exc}; try smaller n_max/k_max or set truncation.total_excitation_max", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericalError, ContractError, IntegrationError, FitError, DoubletError, HermiticityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for name, text in files.items():
        io.write_text(out_dir / name, text)
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
