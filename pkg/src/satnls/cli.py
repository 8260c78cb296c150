"""Command-line entry point: ``satnls <subcommand> --config FILE [options]``.

Exit codes: 0 when the run or study passes, 1 when a study verdict is
``fail`` (or a simulation is aborted by a guard), 2 on usage or
configuration errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, Document, digest, emit_config, parse_document
from .experiments import (
    blowup_prevention_check,
    convergence_study,
    flow_continuity_check,
    inflation_counterpart,
    ode_inflation_demo,
)
from .grid import Field
from .integrator import SimulationAborted, evolve
from .io import OutputError, write_diagnostics_csv, write_gnuplot, write_manifest, write_report, write_snapshot
from .operators import GuardError, SaturationScheme

log = logging.getLogger("satnls")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MASS_TOLERANCE = 1e-11
DEFAULT_INFLATION_H = (0.25, 0.125, 0.0625, 0.03125)


class UsageError(Exception):
    pass


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the configuration file")
    common.add_argument("--out", default="satnls-out", help="output directory (default: %(default)s)")
    common.add_argument("--h-list", type=_csv_floats, help="saturation parameters, e.g. 0.125,0.0625")
    common.add_argument("--norms", type=_csv_floats, help="Sobolev indices s to report, e.g. 0,1")
    common.add_argument("--seed", type=int, help="override the datum seed")
    common.add_argument("--quiet", action="store_true", help="only print the verdict line")

    parser = argparse.ArgumentParser(prog="satnls", description="Saturated NLS simulations and studies.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="subcommand")
    for name, text in [
        ("simulate", "evolve the configured datum and write diagnostics"),
        ("conserve", "evolve and check mass and energy conservation"),
        ("converge", "convergence study in the saturation parameter h"),
        ("ode-demo", "closed-form ODE inflation demo and its cut-off counterpart"),
        ("continuity", "flow continuity: growth constant of perturbations"),
        ("blowup", "focusing blow-up versus saturated runs"),
    ]:
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def _load(args) -> Document:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}")
    doc = parse_document(text)
    cfg = doc.config
    if args.seed is not None:
        cfg = cfg.with_(datum=replace(cfg.datum, seed=args.seed))
    if args.norms is not None:
        cfg = cfg.with_(norms=tuple(args.norms))
    doc.config = cfg
    return doc


def _run_simulation(doc: Document, args, out: Path, check_conservation: bool):
    cfg = doc.config
    outputs, result = [], {}
    try:
        u, series = evolve(cfg)
        aborted = None
    except SimulationAborted as exc:
        u, series, aborted = None, exc.series, exc
    if series is not None:
        outputs.append(write_diagnostics_csv(series, out / "diagnostics.csv").name)
    if u is not None:
        outputs.append(write_snapshot(out / "final.npz", cfg.grid, cfg.T, u.values).name)
    result = {"kind": "conservation" if check_conservation else "simulation",
              "config_digest": digest(emit_config(cfg)), "h": None, "errors": {},
              "slope": None, "r2": None, "claimed_rate": None,
              "mass_drift": series.mass_drift() if series is not None and len(series) else None,
              "energy_drift": series.energy_drift() if series is not None and len(series) else None,
              "steps": cfg.steps}
    if aborted is not None:
        result.update(aborted=aborted.reason, aborted_step=aborted.step, aborted_t=aborted.t,
                      verdict="fail")
    elif check_conservation:
        result["mass_tolerance"] = MASS_TOLERANCE
        result["verdict"] = "pass" if result["mass_drift"] <= MASS_TOLERANCE else "fail"
    else:
        result["verdict"] = "pass"
    return result, outputs


def _continuity(doc: Document):
    cfg, st = doc.config, doc.study
    grid = cfg.grid
    u0 = cfg.datum.realize(grid)
    c = np.asarray(cfg.datum.center, float) if cfg.datum.center else np.zeros(grid.d)
    r2 = sum((x - ci - 1.0) ** 2 for x, ci in zip(grid.coords, np.broadcast_to(c, (grid.d,))))
    bump = st.perturbation * np.exp(-r2 / 2) * (1 + 1j)
    times = st.sample_times or tuple(np.linspace(0.0, cfg.T, 11)[1:])
    rep = flow_continuity_check(u0, Field(grid, u0.values + bump), cfg, times)
    gauge = flow_continuity_check(u0, Field(grid, np.exp(0.7j) * u0.values), cfg, times)
    data = rep.to_dict()
    data["gauge_deviation"] = gauge.gauge_deviation
    data["gauge_verdict"] = gauge.verdict
    data["perturbation"] = st.perturbation
    data["verdict"] = "pass" if rep.verdict == "pass" and gauge.verdict == "pass" else "fail"
    return data


def _ode_demo(doc: Document, args):
    cfg, st = doc.config, doc.study
    h_list = args.h_list or st.h_list or DEFAULT_INFLATION_H
    rep = ode_inflation_demo(cfg.grid.d, cfg.params.sigma, st.s, st.k, h_list, st.t, cfg.grid)
    rep.counterpart = inflation_counterpart(cfg.grid, cfg.params.sigma, st.s, h_list, st.t,
                                            st.h_cut, cfg.params.epsilon)
    return rep


def _study(command: str, doc: Document, args):
    cfg, st = doc.config, doc.study
    if command == "converge":
        kwargs = {}
        h_list = args.h_list or st.h_list
        if h_list:
            kwargs["h_list"] = h_list
        return convergence_study(cfg, norms=args.norms or st.norms, **kwargs)
    if command == "ode-demo":
        return _ode_demo(doc, args)
    if command == "continuity":
        return _continuity(doc)
    h = st.saturation_h
    schemes = (SaturationScheme("cutoff", h, cfg.params.scheme.profile), SaturationScheme("rational-sat", h))
    return blowup_prevention_check(cfg, amplitudes=st.amplitudes or None, saturated=schemes)


def run(args) -> int:
    start = time.perf_counter()
    doc = _load(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    (out / "config.cfg").write_text(emit_config(doc.config, doc.study))
    outputs = ["config.cfg"]
    csv_name = None
    if args.command in ("simulate", "conserve"):
        report, written = _run_simulation(doc, args, out, args.command == "conserve")
        outputs += written
        csv_name = "diagnostics.csv" if "diagnostics.csv" in written else None
    else:
        report = _study(args.command, doc, args)
    data = report if isinstance(report, dict) else report.to_dict()
    data.setdefault("config_digest", digest(emit_config(doc.config)))
    outputs.append(write_report(data, out / "report.json").name)
    outputs.append(write_gnuplot(data, csv_name, out / "report.gp").name)
    seeds = {"datum": doc.config.datum.seed}
    write_manifest(out / "manifest.json", data["config_digest"], seeds, outputs + ["manifest.json"],
                   time.perf_counter() - start, {"command": args.command})
    verdict = data.get("verdict", "fail")
    if not args.quiet:
        for key in ("slope", "r2", "mass_drift", "energy_drift", "aborted"):
            if data.get(key) is not None:
                print(f"{key}: {data[key]}")
        print(f"outputs written to {out}")
    print(f"{args.command}: {verdict}")
    return EXIT_FAIL if verdict in ("fail", "inconclusive - increase amplitude") else EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except SimulationAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ConfigError, UsageError, GuardError, ValueError, OutputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
