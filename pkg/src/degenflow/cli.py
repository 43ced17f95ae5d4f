"""Command-line front end.

    degenflow verify-lemmas [--config PATH] [--out DIR] [--seed N] [--threads N]
    degenflow solve         ...
    degenflow estimates     ...
    degenflow eps-sweep     ...

Configuration is an INI file with the sections below; unknown sections or
keys are rejected.  Every key is optional.

    [params]     p, delta, eps, n
    [grid]       lo, hi, points, dt, nt, t0            (cube lo..hi in every axis)
    [data]       profile, value, amplitude, slope, time_factor, mollifier
    [solver]     max_iter, abs_tol, damping, fallback
    [lemmas]     p_values, delta_values, n_values, samples, shards, lemmas, tolerance
    [estimates]  R, rho, h, x0, t0, snapshot, refine
    [sweep]      eps_values, R, slack, mollify

Lists are comma separated.  ``profile`` is one of constant, manufactured,
stationary, plateau, source.  Exit codes: 0 success, 1 verification or
solver failure, 2 usage or configuration error.  ``DEGENFLOW_LOG`` sets the
log level (default WARNING).
"""

import argparse
import configparser
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import DegenflowError, SolverError
from .estimates import (caccioppoli_report, comparison_report, diffquot_estimate_report,
                        eps_ladder, higher_integrability_report, is_halving,
                        uniform_estimate_report, write_reports_csv)
from .flux import Params
from .grid import Grid, ScalarField, read_snapshot, write_snapshot
from .inequality_lab import LEMMA_IDS, run_lemma_suite, write_lemma_csv
from .solver import (NonlinearSettings, constant_problem, plateau_problem, problem_from_solution,
                     solve, source_problem, stationary_quadratic, tilted_wave,
                     write_convergence_log)

log = logging.getLogger("degenflow")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(DegenflowError):
    """Malformed or inconsistent configuration."""


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _strs(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


SCHEMA = {
    "params": {"p": (float, 3.0), "delta": (float, 0.5), "eps": (float, 0.1), "n": (int, 2)},
    "grid": {"lo": (float, 0.0), "hi": (float, 1.0), "points": (int, 33), "dt": (float, 0.01),
             "nt": (int, 26), "t0": (float, 0.0)},
    "data": {"profile": (str, "manufactured"), "value": (float, 0.0), "amplitude": (float, None),
             "slope": (float, 1.5), "time_factor": (str, "linear"), "mollifier": (float, 0.0)},
    "solver": {"max_iter": (int, 50), "abs_tol": (float, 1e-9), "damping": (float, 1.0),
               "fallback": (_bool, True)},
    "lemmas": {"p_values": (_floats, [2.0, 2.5, 3.0, 4.0, 6.0]),
               "delta_values": (_floats, [0.1, 0.5, 0.9]), "n_values": (_ints, [2, 3]),
               "samples": (int, 100_000), "shards": (int, 8), "lemmas": (_strs, list(LEMMA_IDS)),
               "tolerance": (float, 1e-12)},
    "estimates": {"R": (float, None), "rho": (float, None), "h": (_floats, None),
                  "x0": (_floats, None), "t0": (float, None), "snapshot": (str, None),
                  "refine": (_bool, False)},
    "sweep": {"eps_values": (_floats, [0.1, 0.05, 0.025, 0.0125]), "R": (float, None),
              "slack": (float, 0.10), "mollify": (_bool, True)},
}

PROFILES = ("constant", "manufactured", "stationary", "plateau", "source")


def load_config(path=None):
    """Parse an INI file against :data:`SCHEMA`; returns ``(config, raw_text)``
    where ``config`` maps section -> key -> typed value (defaults filled in)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    text = ""
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
    config = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    for section, keys in SCHEMA.items():
        config[section] = {k: default for k, (_, default) in keys.items()}
        if not parser.has_section(section):
            continue
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            conv = keys[key][0]
            try:
                config[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    return config, text


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class Run:
    """Output directory plus the manifest shared by every file of one run."""

    def __init__(self, command, args, config):
        self.command = command
        self.seed = args.seed
        self.config_path = args.config
        self.out = args.out
        self.threads = args.threads
        self.hash = config_hash(config)
        try:
            os.makedirs(self.out, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {self.out}: {exc}") from exc
        if not os.access(self.out, os.W_OK):
            raise ConfigError(f"output directory {self.out} is not writable")
        self.files = []

    @property
    def header(self):
        return [f"command={self.command}", f"seed={self.seed}", f"config_hash={self.hash}",
                f"degenflow={__version__}"]

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def sidecar(self, name, extra=None):
        """JSON manifest next to a binary output."""
        data = {"command": self.command, "seed": self.seed, "config_hash": self.hash,
                "file": name}
        data.update(extra or {})
        with open(self.path(name + ".json"), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self, status):
        manifest = {
            "command": self.command,
            "config": None if self.config_path is None else os.path.abspath(self.config_path),
            "out": os.path.abspath(self.out),
            "seed": self.seed,
            "config_hash": self.hash,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "status": status,
            "files": sorted(self.files),
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- config -> objects ------------------------------------------------------------

def build_params(config, eps=None):
    c = config["params"]
    return Params(p=c["p"], delta=c["delta"], eps=c["eps"] if eps is None else eps, n=c["n"])


def build_grid(config, refine=1):
    c = config["grid"]
    points = (c["points"] - 1) * refine + 1
    return Grid.cube(config["params"]["n"], c["lo"], c["hi"], points, c["dt"], c["nt"], c["t0"])


def build_settings(config):
    c = config["solver"]
    return NonlinearSettings(c["max_iter"], c["abs_tol"], c["damping"], c["fallback"])


def build_problem(config, params=None, grid=None, mollifier=None):
    params = params or build_params(config)
    grid = grid or build_grid(config)
    newton = build_settings(config)
    d = config["data"]
    profile = d["profile"]
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    moll = d["mollifier"] if mollifier is None else mollifier
    if profile == "constant":
        spec = constant_problem(params, grid, d["value"], newton)
    elif profile == "manufactured":
        amp = 0.1 if d["amplitude"] is None else d["amplitude"]
        spec = problem_from_solution(params, grid, tilted_wave(params.n, amp, d["time_factor"]),
                                     newton)
    elif profile == "stationary":
        spec = problem_from_solution(params, grid, stationary_quadratic(params.n), newton)
    elif profile == "plateau":
        amp = 0.9 if d["amplitude"] is None else d["amplitude"]
        spec = plateau_problem(params, grid, amp, newton)
    else:
        amp = 4.0 if d["amplitude"] is None else d["amplitude"]
        spec = source_problem(params, grid, amp, d["slope"], newton=newton)
    if moll:
        spec = type(spec)(spec.params, spec.grid, spec.f, spec.initial, spec.boundary,
                          spec.newton, moll)
    return spec


def exact_solution(config, grid):
    """Exact space-time values for the profiles that have one, else None."""
    d, n = config["data"], config["params"]["n"]
    if d["profile"] == "manufactured":
        sol = tilted_wave(n, 0.1 if d["amplitude"] is None else d["amplitude"], d["time_factor"])
    elif d["profile"] == "stationary":
        sol = stationary_quadratic(n)
    elif d["profile"] == "constant":
        return np.full(grid.shape, d["value"])
    else:
        return None
    x = grid.coords()
    return np.stack([np.broadcast_to(sol.u(x, t), grid.nx) for t in grid.times])


# -- commands ---------------------------------------------------------------------

def cmd_verify_lemmas(config, run, shard_fn=None):
    c = config["lemmas"]
    rows = run_lemma_suite(c["p_values"], c["delta_values"], c["n_values"],
                           samples=c["samples"], seed=run.seed, shards=c["shards"],
                           threads=run.threads, lemmas=tuple(c["lemmas"]), shard_fn=shard_fn)
    write_lemma_csv(rows, run.path("lemmas.csv"), run.header)
    bad = [r for r in rows if not r.min_gap >= -c["tolerance"]]
    for r in bad:
        log.error("lemma %s failed at p=%g delta=%g n=%d: min_gap=%.3e",
                  r.lemma_id, r.p, r.delta, r.n, r.min_gap)
    print(f"verify-lemmas: {len(rows) - len(bad)}/{len(rows)} rows passed")
    return EXIT_FAIL if bad else EXIT_OK


def _write_error_table(run, result, exact, grid):
    with open(run.path("errors.csv"), "w") as fh:
        for line in run.header:
            fh.write(f"# {line}\n")
        fh.write("step,t,l2_error,max_error\n")
        for k in range(grid.nt):
            e = result.values[k] - exact[k]
            l2 = math.sqrt(grid.cell_volume * float(np.sum(e * e)))
            fh.write(f"{k},{float(grid.times[k])!r},{l2!r},{float(np.max(np.abs(e)))!r}\n")


def cmd_solve(config, run):
    spec = build_problem(config)
    grid = spec.grid
    try:
        result = solve(spec)
    except SolverError as exc:
        log.error("%s (residual %.3e)", exc, exc.residual)
        print(f"solve: failed at step {exc.step}")
        return EXIT_FAIL
    write_snapshot(run.path("solution.dgfl"), result.field)
    run.sidecar("solution.dgfl", {"grid": grid.fingerprint(), "nx": list(grid.nx),
                                  "nt": grid.nt, "dt": grid.dt, "t0": grid.t0,
                                  "extent": [list(e) for e in grid.extent]})
    write_convergence_log(run.path("convergence.csv"), result, grid, run.header)
    exact = exact_solution(config, grid)
    if exact is not None:
        _write_error_table(run, result, exact, grid)
    print(f"solve: {grid.nt - 1} steps, max iters {int(result.iters.max())}, "
          f"max residual {float(result.residuals.max()):.3e}")
    return EXIT_OK


def _load_or_solve(config, spec, config_dir):
    path = config["estimates"]["snapshot"]
    if path is None:
        return solve(spec).field
    if not os.path.isabs(path):
        path = os.path.join(config_dir, path)
    if not os.path.exists(path):
        raise ConfigError(f"snapshot {path} does not exist")
    values, header = read_snapshot(path)
    grid = spec.grid
    if header["nx"] != grid.nx or header["nt"] != grid.nt:
        raise ConfigError("snapshot shape does not match the configured grid")
    return ScalarField(grid, values)


def _estimate_reports(config, spec, u, u_half, spec_half):
    grid = spec.grid
    e = config["estimates"]
    half = min(b - a for a, b in grid.extent) / 2
    R = e["R"] if e["R"] is not None else min(half, math.sqrt(grid.t_end - grid.t0))
    rho = e["rho"] if e["rho"] is not None else R / 2
    x0 = tuple(e["x0"]) if e["x0"] is not None else tuple(0.5 * (a + b) for a, b in grid.extent)
    t0 = e["t0"] if e["t0"] is not None else grid.t_end
    z0 = (x0, t0)
    dx = grid.spacing[0]
    hs = e["h"] if e["h"] is not None else [m * dx for m in (4, 2, 1) if m * dx < rho / 4]
    reports = [caccioppoli_report(u, spec.params, R, z0, f=spec.f),
               uniform_estimate_report(u, spec, rho, z0)]
    reports += [diffquot_estimate_report(u, spec, rho, h, z0) for h in hs]
    reports.append(comparison_report(u, u_half, spec.f, spec.f_eps, spec_half.f_eps,
                                     spec.params, R, z0))
    reports.append(higher_integrability_report(u, spec, rho, z0))
    return reports


def cmd_estimates(config, run):
    config_dir = os.path.dirname(os.path.abspath(run.config_path)) if run.config_path else "."
    spec = build_problem(config)
    u = _load_or_solve(config, spec, config_dir)
    params_half = build_params(config, eps=spec.params.eps / 2)
    spec_half = build_problem(config, params=params_half)
    try:
        u_half = solve(spec_half).field
        reports = _estimate_reports(config, spec, u, u_half, spec_half)
    except SolverError as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    write_reports_csv(reports, run.path("estimates.csv"), run.header)
    text = "\n\n".join(r.summary() for r in reports)
    if config["estimates"]["refine"]:
        grid2 = build_grid(config, refine=2)
        spec2 = build_problem(config, grid=grid2)
        spec2_half = build_problem(config, params=params_half, grid=grid2)
        try:
            fine = _estimate_reports(config, spec2, solve(spec2).field,
                                     solve(spec2_half).field, spec2_half)
        except SolverError as exc:
            log.error("%s", exc)
            return EXIT_FAIL
        write_reports_csv(fine, run.path("estimates_refined.csv"), run.header)
        with open(run.path("stability.csv"), "w") as fh:
            for line in run.header:
                fh.write(f"# {line}\n")
            fh.write("estimate_id,h,ratio_coarse,ratio_fine,relative_change\n")
            # pair rows by estimate and shift; the grids admit different h ladders
            fine_by_key = {(r.estimate_id, r.extras.get("h")): r for r in fine}
            for a in reports:
                key = (a.estimate_id, a.extras.get("h"))
                if key not in fine_by_key:
                    continue
                b = fine_by_key[key]
                rel = abs(b.ratio - a.ratio) / a.ratio if a.ratio > 0 else 0.0
                h = "" if key[1] is None else repr(key[1])
                fh.write(f"{a.estimate_id},{h},{a.ratio!r},{b.ratio!r},{rel!r}\n")
    with open(run.path("estimates.txt"), "w") as fh:
        for line in run.header:
            fh.write(f"# {line}\n")
        fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_eps_sweep(config, run):
    s = config["sweep"]
    eps_values = s["eps_values"]
    if not eps_values:
        raise ConfigError("eps_values is empty")
    grid = build_grid(config)
    half = min(b - a for a, b in grid.extent) / 2
    R = s["R"] if s["R"] is not None else min(half, math.sqrt(grid.t_end - grid.t0))

    def make_spec(eps):
        params = build_params(config, eps=eps)
        return build_problem(config, params=params, grid=grid,
                             mollifier=eps if s["mollify"] else None)

    try:
        reports, distances, monotone = eps_ladder(make_spec, eps_values, R, slack=s["slack"],
                                                  threads=run.threads)
    except SolverError as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    write_reports_csv(reports, run.path("comparison.csv"), run.header)
    with open(run.path("distances.csv"), "w") as fh:
        for line in run.header:
            fh.write(f"# {line}\n")
        fh.write("eps_1,eps_2,h_distance,sup_l2_sq\n")
        for (e1, e2), r in zip(zip(eps_values, eps_values[1:]), reports):
            fh.write(f"{e1!r},{e2!r},{r.extras['h_distance']!r},{r.extras['sup_l2_sq']!r}\n")
    if len(eps_values) == 1:
        print("eps-sweep: single rung, nothing to compare")
        return EXIT_OK
    print("eps-sweep distances: " + ", ".join(f"{d:.4e}" for d in distances))
    if monotone is None:
        print("eps-sweep: ladder does not halve, monotonicity not asserted"
              if not is_halving(eps_values) else "eps-sweep: one comparison only")
        return EXIT_OK
    print(f"eps-sweep: monotone within {s['slack']:.0%} slack: {monotone}")
    return EXIT_OK if monotone else EXIT_FAIL


COMMANDS = {
    "verify-lemmas": cmd_verify_lemmas,
    "solve": cmd_solve,
    "estimates": cmd_estimates,
    "eps-sweep": cmd_eps_sweep,
}


def make_parser():
    parser = argparse.ArgumentParser(prog="degenflow", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"degenflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="INI configuration file")
        p.add_argument("--out", default="degenflow-out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
    return parser


def _setup_logging():
    level = os.environ.get("DEGENFLOW_LOG", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None, shard_fn=None):
    _setup_logging()
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        config, _ = load_config(args.config)
        run = Run(args.command, args, config)
        if args.command == "verify-lemmas":
            code = cmd_verify_lemmas(config, run, shard_fn=shard_fn)
        else:
            code = COMMANDS[args.command](config, run)
    except DegenflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run.finish("ok" if code == EXIT_OK else "failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
