"""Command line entry point: check / solve / certify / probe / compare-oracle.

Exit status: 0 pass, 1 assumption or certificate failure, 2 non-convergence,
3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import certificate as cert_mod
from .errors import (CertificateFailure, HammersteinError, InvalidArgument, InvalidGenerator,
                     OracleFailure, ProbeInconclusive, Unsupported)
from .kernel import STOCHASTIC, damp, generator_violation, matrix_semigroup_kernel, neumann_box_kernel
from .oracle import ode_reference, volterra_reference
from .problem import (EXISTENCE, RATE, AssumptionReport, CheckEntry, ProblemInstance, SourceField,
                      canonical_mixture, check_assumptions, constant_source, constant_weight,
                      power_nonlinearity, saturating_nonlinearity)
from .solver import propagate_source, solve, uniqueness_probe
from .space import GridFunction, TimeGrid, build_box_space, build_finite_state_space

log = logging.getLogger("hammerstein")

EXIT_OK, EXIT_FAIL, EXIT_NONCONV, EXIT_CONFIG = 0, 1, 2, 3
COMMANDS = ("check", "solve", "certify", "probe", "compare-oracle")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["space", "kernel", "nonlinearity", "weight", "source", "time"],
    "properties": {
        "space": {"oneOf": [
            {"type": "object", "required": ["type", "weights"],
             "properties": {"type": {"const": "finite"}, "weights": _vec}},
            {"type": "object", "required": ["type", "dim", "points", "length"],
             "properties": {"type": {"const": "box"}, "dim": {"type": "integer"},
                            "points": {"type": "integer"}, "length": _pos}},
        ]},
        "kernel": {"oneOf": [
            {"type": "object", "required": ["type", "generator"],
             "properties": {"type": {"const": "matrix"}, "generator": _mat,
                            "damping": {"type": "number", "minimum": 0}}},
            {"type": "object", "required": ["type", "diffusivity", "cutoff"],
             "properties": {"type": {"const": "neumann_box"}, "diffusivity": _pos,
                            "cutoff": {"type": "integer", "minimum": 0},
                            "damping": {"type": "number", "minimum": 0}}},
        ]},
        "nonlinearity": {"type": "object", "required": ["type", "alpha"],
                         "properties": {"type": {"enum": ["power", "saturating"]},
                                        "alpha": _num, "gamma": _num}},
        "weight": {"oneOf": [
            {"type": "object", "required": ["type", "rate", "ratio", "lambda0"],
             "properties": {"type": {"const": "mixture"}, "rate": _pos, "ratio": _num,
                            "lambda0": {"oneOf": [_num, _vec]}, "scale": _pos}},
            {"type": "object", "required": ["type", "value"],
             "properties": {"type": {"const": "constant"}, "value": _num}},
        ]},
        "source": {"oneOf": [
            {"type": "object", "required": ["type", "value"],
             "properties": {"type": {"const": "constant"}, "value": _num}},
            {"type": "object", "required": ["type", "array"],
             "properties": {"type": {"const": "tabulated"}, "array": _mat}},
            {"type": "object", "required": ["type", "u0", "f"],
             "properties": {"type": {"const": "duhamel"},
                            "u0": {"oneOf": [_num, _vec]},
                            "f": {"oneOf": [_num, _vec, _mat]}}},
        ]},
        "time": {"type": "object", "required": ["T", "nt"],
                 "properties": {"T": _pos, "nt": {"type": "integer", "minimum": 1},
                                "T0": _pos}},
        "solver": {"type": "object",
                   "properties": {"tol": _pos, "max_iter": {"type": "integer", "minimum": 1},
                                  "start": {"enum": ["upper", "lower"]}}},
        "certificate": {"type": "object",
                        "properties": {"enabled": {"type": "boolean"},
                                       "epsilon": {"oneOf": [{"const": "auto"}, _pos]}}},
        "oracle": {"type": "object",
                   "properties": {"tol": _pos, "dt_fine": _pos,
                                  "refinement": {"type": "integer", "minimum": 4}}},
    },
}


class ConfigError(HammersteinError):
    pass


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return cfg


def build_problem(cfg: dict) -> ProblemInstance:
    """Assemble an instance; kernel construction errors propagate as-is."""
    s = cfg["space"]
    if s["type"] == "finite":
        space = build_finite_state_space(s["weights"])
    else:
        space = build_box_space(s["dim"], s["points"], s["length"])

    k = cfg["kernel"]
    if k["type"] == "matrix":
        kernel = matrix_semigroup_kernel(k["generator"], space)
    else:
        kernel = neumann_box_kernel(space, k["diffusivity"], k["cutoff"])
    if k.get("damping", 0) > 0:
        kernel = damp(kernel, k["damping"])

    n = cfg["nonlinearity"]
    if n["type"] == "power":
        nl = power_nonlinearity(n["alpha"])
    else:
        if "gamma" not in n:
            raise ConfigError("saturating nonlinearity needs gamma")
        nl = saturating_nonlinearity(n["gamma"], n["alpha"])

    w = cfg["weight"]
    if w["type"] == "mixture":
        lam = np.asarray(w["lambda0"], dtype=float)
        if lam.ndim == 1 and lam.size != space.size:
            raise ConfigError("lambda0 array does not match the number of points")
        weight = canonical_mixture(space.size, w["rate"], w["ratio"], lam, w.get("scale", 1.0))
    else:
        weight = constant_weight(space.size, w["value"])

    t = cfg["time"]
    grid = TimeGrid(t["T"], t["nt"])
    T0 = t.get("T0", t["T"])
    src = cfg["source"]
    if src["type"] == "constant":
        source = constant_source(space, grid, src["value"], T0)
    elif src["type"] == "tabulated":
        arr = np.asarray(src["array"], dtype=float)
        if arr.shape != (space.size, len(grid)):
            raise ConfigError(f"tabulated source must have shape {(space.size, len(grid))}")
        source = SourceField(GridFunction(space, grid, arr), T0)
    else:
        source = propagate_source(kernel, src["u0"], _duhamel_forcing(src["f"], space, grid),
                                  grid, T0)
    return ProblemInstance(kernel, nl, weight, source)


def _duhamel_forcing(f, space, grid):
    arr = np.asarray(f, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (space.size, len(grid)):
            raise ConfigError("tabulated forcing has the wrong shape")
        return GridFunction(space, grid, arr)
    return arr


def _fmt(x) -> str:
    return "%.17g" % x


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_solution_csv(path: Path, problem: ProblemInstance, u: np.ndarray):
    coords = problem.space.coords
    dim = 0 if coords is None else coords.shape[1]
    # finite state spaces have no coordinates, so the column is dropped
    header = ["point_index"] + ["x_coord", "y_coord"][:dim] + ["t", "u"]
    rows = []
    for x in range(problem.space.size):
        c = [] if coords is None else [float(v) for v in coords[x]]
        for i, t in enumerate(problem.time.nodes):
            rows.append([x, *c, float(t), float(u[x, i])])
    _write_csv(path, header, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class Run:
    def __init__(self, command, cfg, out: Path, force: bool, seed: int):
        self.command, self.cfg, self.out = command, cfg, out
        self.force, self.seed = force, seed
        self.summary = {"command": command, "config": cfg, "force": force, "seed": seed,
                        "errors": [], "timings": {}}
        self.clock = time.perf_counter()

    def tick(self, name):
        now = time.perf_counter()
        self.summary["timings"][name] = now - self.clock
        self.clock = now

    def fail(self, kind, message):
        self.summary["errors"].append({"kind": kind, "message": str(message)})

    def finish(self, code: int) -> int:
        self.summary["exit_code"] = code
        self.summary["status"] = {0: "pass", 1: "failed", 2: "non-converged",
                                  3: "config-error"}[code]
        self.out.mkdir(parents=True, exist_ok=True)
        with (self.out / "summary.json").open("w") as fh:
            json.dump(_jsonable(self.summary), fh, indent=2)
        return code


def _generator_entries(cfg) -> tuple[CheckEntry, ...]:
    k = cfg["kernel"]
    if k["type"] != "matrix":
        return ()
    try:
        off, neg = generator_violation(k["generator"])
    except InvalidGenerator as exc:
        return (CheckEntry("generator square", False, np.inf, sampled=False, detail=str(exc)),)
    return (CheckEntry("generator off-diagonal <= 0", off <= 1e-12, off, sampled=False),
            CheckEntry("generator row sums >= 0", neg <= 1e-12, neg, sampled=False))


def _solver_opts(cfg):
    s = cfg.get("solver", {})
    return s.get("tol", 1e-10), s.get("max_iter", 500), s.get("start", "upper")


def _measured_gaps(sol) -> list[float]:
    uf = sol.u.values
    return [float(np.max(it - uf)) for it in sol.iterates[1:]]


def execute(run: Run) -> int:
    cfg = run.cfg
    gen_entries = _generator_entries(cfg)
    try:
        problem = build_problem(cfg)
    except InvalidGenerator as exc:
        run.fail("assumption", exc)
        run.summary["assumptions"] = AssumptionReport("unknown", gen_entries).as_dict()
        return EXIT_FAIL
    except ConfigError:
        raise
    except (InvalidArgument, Unsupported) as exc:
        raise ConfigError(str(exc)) from exc
    run.summary["regime"] = problem.regime
    run.tick("build")

    report = check_assumptions(problem, seed=run.seed)
    if gen_entries:
        report = AssumptionReport(report.regime, gen_entries + report.entries)
    run.summary["assumptions"] = report.as_dict()
    run.tick("check")
    cmd = run.command
    if cmd == "check":
        if not report.passed:
            run.fail("assumption", ", ".join(e.name for e in report.failures()))
            return EXIT_FAIL
        return EXIT_OK

    cert_cfg = cfg.get("certificate", {})
    want_cert = cmd == "certify" or (cmd == "solve" and cert_cfg.get("enabled", False))
    scope = RATE if want_cert else EXISTENCE
    if not report.passed_for(scope):
        failed = [e.name for e in report.failures()]
        if not run.force:
            run.fail("assumption", ", ".join(failed))
            return EXIT_FAIL
        run.summary["forced_past"] = failed

    tol, max_iter, start = _solver_opts(cfg)
    if cmd == "probe":
        try:
            rep = uniqueness_probe(problem, tol, max_iter, force=True)
        except ProbeInconclusive as exc:
            run.fail("non-convergence", exc)
            return EXIT_NONCONV
        run.summary["probe"] = rep.summary()
        run.tick("probe")
        write_solution_csv(run.out / "solution.csv", problem, rep.upper.u.values)
        return EXIT_OK if rep.passed else EXIT_FAIL

    if cmd == "compare-oracle":
        return _compare_oracle(run, problem, tol, max_iter, start)

    sol = solve(problem, start, tol, max_iter, force=True, keep_iterates=True)
    sol.forced = run.force
    run.tick("solve")
    run.out.mkdir(parents=True, exist_ok=True)
    run.summary["solution"] = sol.summary()
    run.summary["residual"] = sol.residual
    write_solution_csv(run.out / "solution.csv", problem, sol.u.values)
    gaps = _measured_gaps(sol)

    code = EXIT_OK
    cert = None
    if want_cert:
        try:
            cert = cert_mod.certify(problem, cert_cfg.get("epsilon", "auto"))
        except CertificateFailure as exc:
            run.fail("certificate", exc)
            code = EXIT_FAIL
        run.tick("certify")
    if cert is not None:
        run.summary["certificate"] = cert.as_dict()
        bounds = [cert.bound(m) for m in range(len(gaps))]
        dominated = all(g <= b for g, b in zip(gaps, bounds))
        run.summary["bound_dominated"] = dominated
        if sol.start == "upper" and not dominated:
            run.fail("certificate", "measured iteration error exceeds the a-priori bound")
            code = EXIT_FAIL
        _write_csv(run.out / "convergence.csv", ["m", "measured_gap", "bound"],
                   [[m, g, b] for m, (g, b) in enumerate(zip(gaps, bounds))])
        if problem.regime == STOCHASTIC:
            ts = cert_mod.l_sample_times(problem, 200)
            _write_csv(run.out / "lfunction.csv", ["t", "L"],
                       [[float(t), cert_mod.l_function(problem, cert.threshold, float(t))]
                        for t in ts])
    else:
        _write_csv(run.out / "convergence.csv", ["m", "measured_gap", "bound"],
                   [[m, g, ""] for m, g in enumerate(gaps)])
    if not sol.converged:
        run.fail("non-convergence", f"{sol.iterations} iterations, last gap {sol.history[-1]:g}")
        return EXIT_NONCONV
    return code


def _compare_oracle(run, problem, tol, max_iter, start) -> int:
    cfg = run.cfg
    ocfg = cfg.get("oracle", {})
    sol = solve(problem, start, tol, max_iter, force=True)
    if not sol.converged:
        run.fail("non-convergence", "solver did not converge")
        return EXIT_NONCONV
    gen = problem.kernel.generator
    try:
        if gen is not None:
            src = cfg["source"]
            if src["type"] == "constant":
                u0 = src["value"]
                f = src["value"] * gen.sum(axis=1)
            elif src["type"] == "duhamel":
                u0, f = src["u0"], _duhamel_forcing(src["f"], problem.space, problem.time)
            else:
                raise ConfigError("compare-oracle cannot invert a tabulated source")
            dt_fine = ocfg.get("dt_fine", problem.time.dt / 10)
            ref = ode_reference(gen, u0, f, problem.weight, problem.nonlinearity,
                                problem.time, dt_fine, problem.space)
            method = "ode_rk4"
        else:
            ref = volterra_reference(problem, ocfg.get("refinement", 4))
            method = "volterra_fine"
    except (OracleFailure, InvalidArgument) as exc:
        run.fail("oracle", exc)
        return EXIT_FAIL
    gap = float(np.max(np.abs(ref.values - sol.u.values)))
    limit = ocfg.get("tol", 1e-3)
    run.summary["oracle"] = {"method": method, "sup_gap": gap, "tol": limit}
    run.summary["solution"] = sol.summary()
    run.tick("oracle")
    run.out.mkdir(parents=True, exist_ok=True)
    write_solution_csv(run.out / "solution.csv", problem, sol.u.values)
    return EXIT_OK if gap <= limit else EXIT_FAIL


def run(command: str, config_path, out_dir, force: bool = False, seed: int = 0) -> int:
    out = Path(out_dir)
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        r = Run(command, None, out, force, seed)
        r.fail("config", exc)
        return r.finish(EXIT_CONFIG)
    r = Run(command, cfg, out, force, seed)
    try:
        code = execute(r)
    except ConfigError as exc:
        r.fail("config", exc)
        code = EXIT_CONFIG
    except HammersteinError as exc:
        r.fail(type(exc).__name__, exc)
        code = EXIT_FAIL
    return r.finish(code)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad invocations count as config errors, not as non-convergence
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def main(argv=None) -> int:
    ap = _Parser(prog="hammerstein",
                                 description="Concave Hammerstein-Volterra solver")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--force", action="store_true",
                    help="proceed past failed assumption checks (recorded)")
    ap.add_argument("--seed", type=int, default=0, help="seed for checker sampling")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    code = run(args.command, args.config, args.out, args.force, args.seed)
    print(f"[hammerstein] {args.command}: exit {code} -> {Path(args.out) / 'summary.json'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
