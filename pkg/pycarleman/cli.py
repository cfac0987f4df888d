""" Command Line Module

    Holds the pycarleman command line: argument parsing, run configuration
    resolution and the pipelines behind every subcommand
"""
import argparse
import contextlib
import glob
import logging
import os
import sys
import time

import numpy as np

from pycarleman.carleman import (LEMMAS, calibrate_and_hold, lemma1_sides, lemma2_bump_family, lemma2_sides,
                                 lemma3_sides, mshift_consistency, s_sweep)
from pycarleman.config import RunConfig, load_config
from pycarleman.errors import LabException, NumericalError, ValidationError
from pycarleman.forward import (manufactured_problem, residual_check, series_distance, solve_forward,
                                stability_number)
from pycarleman.grid import Field, build_grid, build_subdomains, lattice_shape, node, scalar_field
from pycarleman.inverse_lab import (example_i_case, example_i_check, example_ii_case, example_ii_check,
                                    obstruction_demo, obstruction_source, rot_source_identity_check,
                                    sample_admissible, stability_experiment)
from pycarleman.manifest import MANIFEST_NAME, ArtifactManifest
from pycarleman.storage import (ensure_dir, read_json, write_csv, write_json, write_report, write_snapshot,
                                write_svg)
from pycarleman.util import configure_logging, parse_float_list
from pycarleman.weights import (build_psi_phi0, build_weights, check_dalpha_bound,
                                check_weight_equivalence)

logger = logging.getLogger(__name__)

COMMANDS = ("weights", "forward", "carleman", "stability", "obstruction", "examples", "report")
EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_NUMERICAL = 2
LEMMA1_CALIBRATION = ("stokes-pulse", "stokes-decay", "stokes-mode2")
LEMMA1_HOLDOUT = ("oseen-pulse", "oseen-decay", "oseen-mode2")
LEMMA1_SLACK = 1.3
LEMMA2_SLACK = 1.2
SWEEP_GROUPS = {"lemma1": "family", "lemma2": "field"}
SWEEP_COLUMNS = ["s", "lhs", "rhs", "ratio"]
TIMINGS_NAME = "timings.json"
REPORT_NAME = "report"


class LabArgumentParser(argparse.ArgumentParser):
    """ Argument parser raising ValidationError instead of exiting """
    def error(self, message):
        raise ValidationError("Error parsing arguments: {}".format(message))


def build_parser():
    """ Parser with one subcommand per experiment """
    common = LabArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="generator seed")
    common.add_argument("--s", help="comma separated Carleman parameters")
    common.add_argument("--lambda", dest="lam", type=float, help="weight parameter lambda")
    common.add_argument("--grid", type=int, help="cells per axis")
    common.add_argument("--nt", type=int, help="time steps (even)")
    common.add_argument("--plots", action="store_const", const=True, help="also write SVG plots")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    common.add_argument("--sources", type=int, help="number of admissible sources")
    common.add_argument("--m", type=int, help="weight shift of the space-time estimate")
    common.add_argument("--window", type=float, help="observation window margin")
    common.add_argument("--g", choices=("one", "box"), help="input of the L1 estimate")
    parser = LabArgumentParser(prog="pycarleman", description="Carleman estimate and inverse source lab")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    for name in COMMANDS:
        sub = commands.add_parser(name, parents=[common])
        if name == "carleman":
            sub.add_argument("lemma", choices=LEMMAS)
    return parser


def resolve_config(args):
    """ Config file (or defaults) with the command line flags applied on top """
    config = load_config(args.config) if args.config else RunConfig()
    return config.with_overrides(
        out_dir=args.out, seed=args.seed, lam=args.lam, cells=args.grid, time_steps=args.nt,
        plots=args.plots, sources=args.sources, m=args.m, window=args.window, g=args.g,
        s=tuple(parse_float_list(args.s)) if args.s else None)


def make_grid(config):
    grid = build_grid(config.extent, config.cells, config.T, config.time_steps)
    return build_subdomains(grid, config.omega, config.omega0)


class Run:
    """ Output directory, artifact manifest and timings of one invocation """
    def __init__(self, config, command):
        self.config = config
        self.command = command
        self.out_dir = ensure_dir(config.out_dir)
        self.manifest = ArtifactManifest(self.out_dir)
        self.timings = {}

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def json(self, name, data):
        return self.manifest.record(write_json(self.path(name), data))

    def csv(self, name, rows, fieldnames=None):
        return self.manifest.record(write_csv(self.path(name), rows, fieldnames))

    def snapshot(self, name, field_):
        return self.manifest.record(write_snapshot(self.path(name), field_))

    def plot(self, name, rows, **kwargs):
        if self.config.plots:
            self.manifest.record(write_report(rows, "svg", self.path(name), **kwargs))

    @contextlib.contextmanager
    def timed(self, label):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = time.perf_counter() - start

    def write_timings(self):
        return self.manifest.record(write_json(self.path(TIMINGS_NAME), self.timings), volatile=True)

    def finish(self):
        self.write_timings()
        self.manifest.write(self.config, self.command)


def cmd_weights(run, grid):
    config = run.config
    ws = build_weights(grid, config.lam, config.method, config.peak)
    sw = build_psi_phi0(grid, config.c0, config.lam, config.method)
    run.snapshot("eta.cnsf", scalar_field(grid, node(grid.dim), ws.eta))
    run.snapshot("psi.cnsf", scalar_field(grid, node(grid.dim), sw.psi))
    c_low, c_high = check_weight_equivalence(ws)
    bound = check_dalpha_bound(ws)
    run.json("weights.json", {
        "lambda": ws.lam, "c0": sw.c0, "peak": ws.ell.peak, "eta_max": ws.eta_max,
        "eta_certificate": ws.certificate.as_dict(), "psi_certificate": sw.certificate.as_dict(),
        "c_low": c_low, "c_high": c_high, "dalpha_bound": bound,
    })
    return "weights: min |grad eta| = {:.4g}, c_low = {:.6g}, c_high = {:.6g}, C = {:.4g}".format(
        ws.certificate.min_gradient, c_low, c_high, bound)


def cmd_forward(run, grid):
    config = run.config
    case = manufactured_problem(config.catalog, grid)
    with run.timed("solve"):
        sol = solve_forward(case.problem)
    residuals = residual_check(sol, case.problem)
    for n in range(0, grid.time_steps + 1, config.snapshot_every):
        run.snapshot("velocity_{:04d}.cnsf".format(n), sol.v.snapshot(n))
        run.snapshot("pressure_{:04d}.cnsf".format(n), sol.p.snapshot(n))
    error = series_distance(sol.v, case.exact.v)
    run.json("forward.json", {
        "catalog": config.catalog, "stability_number": stability_number(case.problem),
        "residuals": residuals.as_dict(), "error": error,
        "max_divergence": float(np.max(sol.divergence)),
        "iterations": {"max": max(sol.iterations, default=0), "total": int(sum(sol.iterations))},
    })
    return "forward {}: error {:.4e}, max relative residual {:.2e}".format(
        config.catalog, error, residuals.as_dict()["max_relative"])


def _sweep_rows(report, extra=None):
    return [dict(extra or {}, **row) for row in report.as_rows()]


def _lemma1_family(run, grid, name, ws):
    """ s-sweep and m-shift consistency on one manufactured problem """
    config = run.config
    case = manufactured_problem(name, grid)
    with run.timed("solve-{}".format(name)):
        sol = solve_forward(case.problem)
    residuals = residual_check(sol, case.problem)
    report = s_sweep(lambda s: lemma1_sides(sol.v, case.problem.F, ws, s, config.m, residuals=residuals,
                                            project_source=config.project_source),
                     config.s, "lemma1", m=config.m,
                     inputs={"catalog": name, "project_source": config.project_source},
                     certificates={"eta": ws.certificate.as_dict()})
    consistency = mshift_consistency(sol.v, case.problem.F, ws, config.s[len(config.s) // 2], max(config.m, 1),
                                     residuals=residuals, project_source=config.project_source)
    return report, consistency


def _lemma1(run, grid):
    config = run.config
    ws = build_weights(grid, config.lam, config.method, config.peak)
    reports, shifts = {}, {}
    with run.timed("sweep"):
        for name in LEMMA1_CALIBRATION + LEMMA1_HOLDOUT:
            reports[name], shifts[name] = _lemma1_family(run, grid, name, ws)
    summary = calibrate_and_hold([reports[name] for name in LEMMA1_CALIBRATION],
                                 [reports[name] for name in LEMMA1_HOLDOUT], LEMMA1_SLACK)
    summary.update(lemma="lemma1", m=config.m, project_source=config.project_source,
                   calibration=list(LEMMA1_CALIBRATION), holdout_families=list(LEMMA1_HOLDOUT),
                   families={name: {key: value for key, value in report.summary().items() if key != "certificates"}
                             for name, report in reports.items()},
                   mshift=shifts, mshift_passed=all(shift["passed"] for shift in shifts.values()),
                   certificates={"eta": ws.certificate.as_dict()})
    rows = []
    for name, report in reports.items():
        rows.extend(_sweep_rows(report, {"family": name}))
    return rows, ["family"] + SWEEP_COLUMNS, summary


def _lemma2(run, grid):
    config = run.config
    sw = build_psi_phi0(grid, config.c0, config.lam, config.method)
    family = lemma2_bump_family(grid, config.seed, config.bumps)
    reports = []
    with run.timed("sweep"):
        for w in family:
            reports.append(s_sweep(lambda s, w=w: lemma2_sides(w, sw, s), config.s, "lemma2",
                                   inputs={"seed": config.seed}, certificates={"psi": sw.certificate.as_dict()}))
    split = len(reports) // 2
    summary = calibrate_and_hold(reports[:split], reports[split:], LEMMA2_SLACK)
    summary.update(lemma="lemma2", fields=len(reports), certificates={"psi": sw.certificate.as_dict()})
    rows = []
    for index, report in enumerate(reports):
        rows.extend(_sweep_rows(report, {"field": index}))
    return rows, ["field"] + SWEEP_COLUMNS, summary


def _lemma3(run, grid):
    config = run.config
    ws = build_weights(grid, config.lam, config.method, config.peak)
    stag = node(grid.dim)
    if config.g == "one":
        values = np.ones(lattice_shape(grid, stag))
    else:
        values = grid.mask("omega0", stag).astype(np.float64)
    g = Field(grid, (stag,), (values,))
    with run.timed("sweep"):
        report = s_sweep(lambda s: lemma3_sides(g, ws, s), config.s, "lemma3", inputs={"g": config.g},
                         certificates={"eta": ws.certificate.as_dict()})
    return _sweep_rows(report), SWEEP_COLUMNS, report.summary()


def cmd_carleman(run, grid, lemma):
    build = {"lemma1": _lemma1, "lemma2": _lemma2, "lemma3": _lemma3}[lemma]
    rows, columns, summary = build(run, grid)
    run.csv("{}.csv".format(lemma), rows, columns)
    run.json("{}.json".format(lemma), summary)
    run.plot("{}.svg".format(lemma), rows, x="s", y="ratio", group=SWEEP_GROUPS.get(lemma))
    constant = summary.get("constant")
    return "carleman {}: {} rows, constant {}, threshold {}".format(
        lemma, len(rows), "undefined" if constant is None else "{:.4g}".format(constant), summary.get("threshold"))


def cmd_stability(run, grid):
    config = run.config
    sources = [sample_admissible(grid, seed, config.M, config.amplitude, profile=config.profile)
               for seed in range(config.seed, config.seed + max(config.sources, 0))]
    with run.timed("experiment"):
        result = stability_experiment(sources, window=config.window or None)
    rows = [row.as_dict() for row in result.rows]
    run.csv("stability.csv", rows)
    run.json("stability.json", dict(result.summary, M=config.M, profile=config.profile))
    if config.plots:
        usable = [(i, row.ratio) for i, row in enumerate(result.rows) if row.ratio is not None]
        if usable:
            path = write_svg(run.path("stability.svg"),
                             {"ratio": ([i for i, _ in usable], [r for _, r in usable])},
                             "source", "ratio", loglog=False, scatter=True)
            run.manifest.record(path)
    return "stability: {} sources, max ratio {}, spread {}".format(
        len(rows), result.summary["max_ratio"], result.summary["spread"])


def cmd_obstruction(run, grid):
    config = run.config
    psi = obstruction_source(grid, config.obstruction_center, config.obstruction_radius,
                             config.obstruction_amplitude)
    report = obstruction_demo(grid, psi, config.M, config.window or None)
    run.json("obstruction.json", report)
    return "obstruction: D = {:.3e}, |F| = {:.3e}, failed clauses {}".format(
        report["data_norm"], report["source_norm"], ",".join(report["failed_clauses"]) or "none")


def cmd_examples(run, grid):
    config = run.config
    cube = build_grid((1.0, 1.0, 1.0), config.example_cells, config.T, config.example_time_steps)
    r, f = example_ii_case(cube)
    second = example_ii_check(r, f)
    R, factor = example_i_case(grid)
    first = example_i_check(R, factor, grid)
    case = manufactured_problem(config.catalog, grid)
    sol = solve_forward(case.problem)
    identity = rot_source_identity_check(sol, case.problem)
    run.json("examples.json", {"example_i": first, "example_ii": second, "rot_source_identity": identity})
    return "examples: div(r x f) residual {:.2e}, rot identity residual {:.2e}".format(
        second["identity_residual"], identity["identity_residual"])


def cmd_report(run, grid):
    skip = {MANIFEST_NAME, TIMINGS_NAME, REPORT_NAME + ".json"}
    collected = {}
    for path in sorted(glob.glob(os.path.join(run.out_dir, "*.json"))):
        name = os.path.basename(path)
        if name not in skip:
            collected[name[:-len(".json")]] = read_json(path)
    rows = []
    for artifact, content in collected.items():
        if isinstance(content, dict):
            for key in sorted(content):
                if not isinstance(content[key], (dict, list)):
                    rows.append({"artifact": artifact, "key": key, "value": content[key]})
    run.json(REPORT_NAME + ".json", collected)
    run.csv(REPORT_NAME + ".csv", rows, ["artifact", "key", "value"])
    return "report: {} summaries aggregated".format(len(collected))


HANDLERS = {
    "weights": cmd_weights,
    "forward": cmd_forward,
    "stability": cmd_stability,
    "obstruction": cmd_obstruction,
    "examples": cmd_examples,
    "report": cmd_report,
}


def execute(args, config):
    run = Run(config, args.command)
    grid = None if args.command == "report" else make_grid(config)
    logger.info("running %s", args.command)
    try:
        if args.command == "carleman":
            line = cmd_carleman(run, grid, args.lemma)
        else:
            line = HANDLERS[args.command](run, grid)
    except LabException:
        run.write_timings()
        raise
    run.finish()
    print(line)
    return line


def run(argv=None):
    """ Runs one subcommand

    Returns:
        0 on success, 1 on contract violations, 2 on numerical failures
    """
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.verbose)
        execute(args, resolve_config(args))
    except ValidationError as error:
        logger.error("%s", error.value)
        print("error: {}".format(error.value), file=sys.stderr)
        return EXIT_CONTRACT
    except NumericalError as error:
        logger.error("%s", error.value)
        print("numerical failure: {}".format(error.value), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
