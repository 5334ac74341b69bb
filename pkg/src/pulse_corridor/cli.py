"""Command-line front end: ``pulse-corridor {design,simulate,analyze,verify}``."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .cycle import (
    OneCycle,
    corridor_extrema,
    fixed_point,
    fixed_point_elements,
    map_corridor_through_output_nl,
)
from .design import ModulationConfig
from .errors import (
    CorridorError,
    DomainError,
    NoStabilizingSlopesError,
    SaturationError,
    SimulationAbort,
    UnreachableCorridorError,
    ValidationError,
)
from .numerics import mat_exp
from .plant import PlantStructure
from .scenario import ConfigError, DesignResult, initial_state, load_config, run_design
from .simulate import (
    corridor_report,
    detect_convergence,
    simulate,
    write_events_csv,
    write_trajectory_csv,
    _atomic_write_rows,
    format_float,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_SCHEMA = 2
EXIT_UNREACHABLE = 3
EXIT_NO_SLOPES = 4
EXIT_SIM_ABORT = 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UnreachableCorridorError):
        return EXIT_UNREACHABLE
    if isinstance(exc, NoStabilizingSlopesError):
        return EXIT_NO_SLOPES
    if isinstance(exc, SimulationAbort):
        return EXIT_SIM_ABORT
    if isinstance(exc, (ValidationError, DomainError, SaturationError)):
        return EXIT_SCHEMA
    return EXIT_FAIL


# ---------------------------------------------------------------------------
# JSON helpers

def _plain(obj):
    """Convert numpy containers and scalars to JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, str, int)):
        return json.dumps(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite number {obj!r} in report")
        text = format_float(obj)
        # keep floats recognisable as floats after a round trip
        return text if any(c in text for c in ".en") else text + ".0"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(obj[k], indent, level + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if not obj:
        return "[]"
    items = [pad + _emit(v, indent, level + 1) for v in obj]
    return "[\n" + ",\n".join(items) + "\n" + end + "]"


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    return _emit(_plain(obj), 2, 0) + "\n"


def _atomic_write_text(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


class Artifacts:
    """Output directory bookkeeping; timestamps live only in the manifest."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name) -> Path:
        self.files.append(name)
        return self.dir / name

    def write_json(self, name, obj):
        _atomic_write_text(self.path(name), dumps(obj))

    def write_manifest(self, command):
        manifest = {
            "command": command,
            "created_unix": time.time(),
            "files": sorted(self.files),
        }
        _atomic_write_text(self.dir / "manifest.json", dumps(manifest))


# ---------------------------------------------------------------------------
# report sections

def _multipliers(ev):
    return [{"re": float(z.real), "im": float(z.imag)} for z in ev]


def design_summary(res: DesignResult) -> dict:
    ca = res.corridor
    return {
        "cycle": {"T": res.cycle.T, "lambda": res.cycle.lam, "X": res.cycle.X,
                  "y0": res.cycle.y0},
        "period_design": {"ratio_residual": res.period.ratio_residual,
                          "target_ratio": res.period.target_ratio,
                          "achieved_ratio": res.period.achieved_ratio},
        "corridor": {"y_bar_min": ca.y_bar_min, "y_bar_max": ca.y_bar_max,
                     "y_min": ca.y_min, "y_max": ca.y_max,
                     "extremum_times": list(ca.extremum_times)},
        "requested_corridor": {"y_bar_min": res.spec.y_bar_min, "y_bar_max": res.spec.y_bar_max,
                               "y_min": res.spec.y_min, "y_max": res.spec.y_max},
        "modulation": res.modulation.as_dict(),
        "stability": {
            "multipliers": _multipliers(res.stability.multipliers),
            "spectral_radius": res.stability.spectral_radius,
            "stable": res.stability.stable,
            "monotone_convergence": res.stability.monotone_convergence,
            "dose_slope": res.stability.dose_slope,
            "period_slope": res.stability.period_slope,
            "K": res.stability.K,
            "open_loop_multipliers": _multipliers(res.zero_slope_stability.multipliers),
            "open_loop_spectral_radius": res.zero_slope_stability.spectral_radius,
        },
    }


def _write_design_tables(res: DesignResult, art: Artifacts):
    p = res.period
    ratio = p.sweep_ratio
    rows = ([format_float(T), format_float(lo), format_float(hi), format_float(r),
             format_float(abs(p.target_ratio - r))]
            for T, lo, hi, r in zip(p.sweep_T, p.sweep_z_min, p.sweep_z_max, ratio))
    _atomic_write_rows(art.path("sweep.csv"), ["T", "z_min", "z_max", "ratio", "objective"], rows)

    mod = res.modulation
    ybar = np.linspace(0.0, 2.0 * res.spec.y_bar_max, 401)
    rows = ([format_float(yb), format_float(res.structure.measured(yb)),
             format_float(mod.dose(float(yb))), format_float(mod.period(float(yb)))] for yb in ybar)
    _atomic_write_rows(art.path("modulation.csv"), ["y_bar", "y", "F", "Phi"], rows)


def cmd_design(cfg, art: Artifacts) -> dict:
    res = run_design(cfg)
    _write_design_tables(res, art)
    report = {"command": "design", "config": cfg.effective(), "design": design_summary(res)}
    art.write_json("report.json", report)
    report["files"] = sorted(art.files)
    return report


def _load_design(path, cfg) -> tuple:
    data = json.loads(Path(path).read_text())
    d = data["design"]
    structure = cfg.structure()
    cycle = OneCycle(T=d["cycle"]["T"], lam=d["cycle"]["lambda"], X=np.asarray(d["cycle"]["X"]))
    m = {k: v for k, v in d["modulation"].items() if k != "output_nl"}
    mod = ModulationConfig(**m, output_nl=structure.output_nl)
    return structure, cycle, mod


def run_simulation(cfg, structure, cycle, mod):
    sim = cfg["simulate"]
    if sim["mode"] == "open":
        mod = ModulationConfig.constant(cycle.T, cycle.lam)
    x0 = initial_state(cfg, cycle)
    traj = simulate(structure, mod, x0, sim["n_firings"], sim["sample_dt"], cfg.settings)
    conv = detect_convergence(traj, cycle, sim["convergence_tol"], min(sim["window"], len(traj.events)))
    return traj, conv


def cmd_simulate(cfg, art: Artifacts, design_path=None) -> dict:
    if design_path is not None:
        structure, cycle, mod = _load_design(design_path, cfg)
        summary = None
    else:
        res = run_design(cfg)
        structure, cycle, mod = res.structure, res.cycle, res.modulation
        summary = design_summary(res)
    traj, conv = run_simulation(cfg, structure, cycle, mod)
    spec = cfg.corridor()
    cut = traj.events[conv.n_star].t_n if conv.converged else traj.events[-1].t_n
    corr = corridor_report(traj, spec, cut, cfg["simulate"]["corridor_tol"])
    write_trajectory_csv(traj, art.path("trajectory.csv"))
    write_events_csv(traj, art.path("events.csv"))
    report = {
        "command": "simulate",
        "config": cfg.effective(),
        "design": summary,
        "simulation": {
            "converged": conv.converged,
            "n_star": conv.n_star,
            "monotone": conv.monotone,
            "direction": conv.direction,
            "firing_outputs": traj.firing_outputs,
            "intervals": [e.T_n for e in traj.events],
            "doses": [e.lambda_n for e in traj.events],
            "transient_cut": cut,
            "corridor": {
                "y_bar_min": corr.y_bar_min, "y_bar_max": corr.y_bar_max,
                "y_min": corr.y_min, "y_max": corr.y_max,
                "violated": corr.violated, "worst_excursion": corr.worst_excursion,
            },
        },
    }
    art.write_json("report.json", report)
    report["files"] = sorted(art.files)
    return report


def cmd_analyze(cfg, art: Artifacts) -> dict:
    a = cfg["analyze"]
    if a["t"] is None or a["lambda"] is None:
        raise ConfigError("analyze needs [analyze] t and lambda")
    structure = cfg.structure()
    plant = structure.linear
    ca = map_corridor_through_output_nl(
        corridor_extrema(plant, a["t"], a["lambda"], cfg.settings), structure.output_nl
    )
    X = fixed_point(plant, a["t"], a["lambda"], settings=cfg.settings)
    report = {
        "command": "analyze",
        "config": cfg.effective(),
        "analysis": {
            "T": ca.T, "lambda": ca.lam, "X": X,
            "extremum_times": list(ca.extremum_times),
            "extremum_values": list(ca.extremum_values),
            "y_bar_min": ca.y_bar_min, "y_bar_max": ca.y_bar_max,
            "y_min": ca.y_min, "y_max": ca.y_max,
        },
    }
    art.write_json("report.json", report)
    report["files"] = sorted(art.files)
    return report


# ---------------------------------------------------------------------------
# verify

def verify_checks(cfg) -> list:
    """Run the invariant suite on the configured instance.

    Returns a list of ``(name, passed, detail)`` and, when the design step
    itself fails, the exit code of that failure (else ``None``).
    """
    checks = []

    def add(name, ok, detail):
        checks.append((name, bool(ok), detail))

    try:
        res = run_design(cfg)
    except CorridorError as exc:
        add("design", False, f"{type(exc).__name__}: {exc}")
        return checks, exit_code_for(exc)
    add("design", True, f"T={res.cycle.T:.6g} lambda={res.cycle.lam:.6g}")
    plant, cycle, settings = res.plant, res.cycle, cfg.settings

    E = mat_exp(plant.A, cycle.T)
    resid = np.linalg.norm(E @ (cycle.X + cycle.lam * plant.B) - cycle.X) / np.linalg.norm(cycle.X)
    Xd = fixed_point_elements(plant, cycle.T, cycle.lam, settings)
    agree = np.max(np.abs(cycle.X - Xd) / np.abs(Xd))
    add("fixed_point_roundtrip", resid <= 1e-8 and agree <= 1e-8,
        f"propagation residual {resid:.2e}, matrix vs divided differences {agree:.2e}")

    AX = plant.A @ cycle.X
    add("AX_negative", np.all(AX < 0), f"AX = {np.array2string(AX, precision=4)}")

    ts = np.linspace(0.0, cycle.T, 200001)[1:-1]
    dense = res.corridor.profile.output(ts, cycle.lam)
    rel = max(abs(dense.min() - res.corridor.y_bar_min) / res.corridor.y_bar_min,
              abs(dense.max() - res.corridor.y_bar_max) / res.corridor.y_bar_max)
    add("extrema_vs_sampling", rel <= 1e-6, f"relative gap {rel:.2e}")

    add("stability", res.stability.stable, f"spectral radius {res.stability.spectral_radius:.6g}")

    try:
        traj, conv = run_simulation(cfg, res.structure, cycle, res.modulation)
    except SimulationAbort as exc:
        add("simulation", False, str(exc))
        return checks, None
    mod = res.modulation
    Tn = np.array([e.T_n for e in traj.events])
    if cfg["simulate"]["mode"] == "open":
        lo, hi = cycle.T, cycle.T
    else:
        lo, hi = mod.Phi1, mod.Phi2
    add("zeno_free", np.all((Tn >= lo) & (Tn <= hi)), f"intervals in [{Tn.min():.6g}, {Tn.max():.6g}]")
    add("state_positivity", np.all(traj.x >= 0) and all(np.all(e.state_pre >= 0) for e in traj.events),
        f"min sampled state {traj.x.min():.3g}")
    jumps = [abs(plant.C @ (e.state_post - e.state_pre)) for e in traj.events]
    add("output_continuity", max(jumps) < 1e-10, f"max output jump {max(jumps):.2e}")
    add("convergence", conv.converged, f"n_star = {conv.n_star}")

    if res.structure.output_nl is not None:
        nl = res.structure.output_nl
        x0 = initial_state(cfg, cycle)
        n = cfg["simulate"]["n_firings"]
        a = simulate(PlantStructure(plant, output_nl=nl), mod.bare(), x0, n, cycle.T, settings)
        b = simulate(PlantStructure(plant), replace(mod, output_nl=nl), x0, n, cycle.T, settings)
        gap = max(max(abs(ea.t_n - eb.t_n), abs(ea.jump - eb.jump),
                      float(np.max(np.abs(ea.state_pre - eb.state_pre))))
                  for ea, eb in zip(a.events, b.events))
        add("wiener_equivalence", gap <= 1e-10, f"max event gap {gap:.2e}")

    if conv.converged:
        corr = corridor_report(traj, res.spec, traj.events[conv.n_star].t_n,
                               cfg["simulate"]["corridor_tol"])
        add("corridor_after_convergence", not corr.violated,
            f"worst excursion {corr.worst_excursion:.2e}")
    return checks, None


def _verify_main(path) -> tuple:
    # configuration and design failures are reported as table rows with their own exit codes
    try:
        cfg = load_config(path)
    except CorridorError as exc:
        report = {"command": "verify", "config": None, "passed": False,
                  "checks": [{"name": "config", "passed": False,
                              "detail": f"{type(exc).__name__}: {exc}"}]}
        return report, exit_code_for(exc)
    return cmd_verify(cfg)


def cmd_verify(cfg) -> tuple:
    """Invariant report and exit code (0 iff every check passes)."""
    checks, design_code = verify_checks(cfg)
    ok = all(passed for _, passed, _ in checks)
    report = {
        "command": "verify",
        "config": cfg.effective(),
        "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in checks],
        "passed": ok,
    }
    if ok:
        return report, EXIT_OK
    return report, design_code if design_code is not None else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point

def _text_report(report) -> str:
    cmd = report["command"]
    lines = []
    if cmd == "verify":
        width = max(len(c["name"]) for c in report["checks"])
        for c in report["checks"]:
            lines.append(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']:<{width}}  {c['detail']}")
        lines.append("all checks passed" if report["passed"] else "some checks FAILED")
        return "\n".join(lines)
    d = report.get("design")
    if d:
        c, m, s = d["cycle"], d["modulation"], d["stability"]
        lines += [
            f"period T        {c['T']:.4f}",
            f"dose lambda     {c['lambda']:.4f}",
            "fixed point X   " + ", ".join(f"{v:.4f}" for v in c["X"]),
            f"corridor        [{d['corridor']['y_bar_min']:.4f}, {d['corridor']['y_bar_max']:.4f}]",
            f"k1..k4          {m['k1']:.4f}, {m['k2']:.4f}, {m['k3']:.4f}, {m['k4']:.4f}",
            "multipliers     " + ", ".join(f"{z['re']:.4g}" if z["im"] == 0 else f"{z['re']:.4g}{z['im']:+.4g}j"
                                           for z in s["multipliers"]),
            f"spectral radius {s['spectral_radius']:.4f} ({'stable' if s['stable'] else 'UNSTABLE'})",
        ]
    sim = report.get("simulation")
    if sim:
        corr = sim["corridor"]
        lines += [
            f"converged       {sim['converged']} (n* = {sim['n_star']}, monotone = {sim['monotone']})",
            f"tail y_bar      [{corr['y_bar_min']:.4f}, {corr['y_bar_max']:.4f}]",
        ]
        if corr["y_min"] is not None:
            lines.append(f"tail y          [{corr['y_min']:.4f}, {corr['y_max']:.4f}]")
        lines.append(f"violation       {corr['violated']} (worst {corr['worst_excursion']:.3g})")
    a = report.get("analysis")
    if a:
        lines += [
            f"extremum times  " + ", ".join(f"{t:.4f}" for t in a["extremum_times"]),
            f"y_bar range     [{a['y_bar_min']:.4f}, {a['y_bar_max']:.4f}]",
            "fixed point X   " + ", ".join(f"{v:.4f}" for v in a["X"]),
        ]
        if a["y_min"] is not None:
            lines.append(f"y range         [{a['y_min']:.4f}, {a['y_max']:.4f}]")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulse-corridor",
        description="Design and simulate pulse-modulated corridor controllers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("design", "period, dose, modulation and stability for a corridor"),
        ("simulate", "closed-loop simulation of the designed controller"),
        ("analyze", "corridor of a given (T, lambda) cycle"),
        ("verify", "run the invariant checks on the configured instance"),
    ]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, type=Path, help="scenario file (INI or JSON)")
        p.add_argument("--out", type=Path, default=Path("out"), help="artifact directory")
        p.add_argument("--seed", type=int, default=None, help="reserved; all computation is deterministic")
        p.add_argument("--format", choices=("json", "text"), default="text")
        if name == "simulate":
            p.add_argument("--design", type=Path, default=None,
                           help="report.json from a previous design run")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            report, code = _verify_main(args.config)
        else:
            cfg = load_config(args.config)
            art = Artifacts(args.out)
            if args.command == "design":
                report = cmd_design(cfg, art)
            elif args.command == "simulate":
                report = cmd_simulate(cfg, art, args.design)
            else:
                report = cmd_analyze(cfg, art)
            art.write_manifest(args.command)
            code = EXIT_OK
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except CorridorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    if args.format == "json":
        sys.stdout.write(dumps(report))
    else:
        print(_text_report(report))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
