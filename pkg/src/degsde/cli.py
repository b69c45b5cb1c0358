"""Command-line front end.

    degsde <command> --config run.toml [--seed S] [--threads N] [--out DIR] [--set sec.key=value ...]

Exit codes: 0 success, 1 a check or coupling verdict failed, 2 usage or
configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import math
import platform
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfg
from . import io
from .boundary import (ball_radial_diffusion, bessel_diffusion, classify, diffusion_from_expr,
                       wright_fisher_diffusion)
from .comparison import couple, setup_for
from .conditions import (FAIL, PASS, check_A1_modulus, check_A3, check_linear_growth,
                         check_unit_ball_condition, default_r_grid, envelope)
from .errors import ConfigError, DegsdeError, NonFiniteState
from .model import OPEN_UNIT_BALL, POSITIVE_ORTHANT, build_model
from .modulus import build_ladder, holder_modulus, linear_modulus, sqrt_modulus
from .paths import integrate, monte_carlo, sample_path, steps_for, uniqueness_gap

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="degsde", description="Simulate and audit degenerate SDEs.")
    parser.add_argument("--version", action="version", version=f"degsde {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    helps = {
        "simulate": "integrate one trajectory and write it as CSV",
        "mc": "Monte Carlo summary over independent paths",
        "check": "sampled audits of the model hypotheses",
        "compare": "couple a projection with its dominating process",
        "classify": "boundary classification of a 1-D diffusion",
        "modulus": "tabulate the smoothing ladder of a modulus",
        "uniqueness": "gap between approximations on one Brownian path",
    }
    for name in cfg.COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. mc.paths=500")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _x0(section, model):
    if section.get("x0") is None:
        raise ConfigError("x0 is required")
    x0 = np.atleast_1d(np.asarray(section["x0"], dtype=float))
    if x0.shape != (model.n,):
        raise ConfigError(f"x0 must have {model.n} components")
    return x0


def _modulus(name, alpha, epsilon):
    if name == "sqrt":
        return sqrt_modulus(epsilon)
    if name == "linear":
        return linear_modulus(epsilon)
    if name == "holder":
        return holder_modulus(float(alpha), epsilon)
    raise ConfigError(f"unknown modulus {name!r}; expected sqrt, linear or holder")


# ---------------------------------------------------------------------------
# commands; each returns (report dict, extra files written, exit code)


def cmd_simulate(conf, out: Path, threads: int):
    s = conf["simulate"]
    model = build_model(conf["model"])
    x0 = _x0(s, model)
    path = sample_path(model.n, s["T"], steps_for(s["T"], s["dt"]), 0, conf["master_seed"], s["path_index"])
    header = ["t"] + [f"x{j + 1}" for j in range(model.n)]
    try:
        traj = integrate(model, x0, s["T"], s["dt"], path, s["scheme"], s["boundary_policy"], s["eps_hit"])
    except NonFiniteState as exc:
        if exc.partial is not None:
            p = exc.partial
            io.write_csv(out / "trajectory.csv", header, np.column_stack([p.t_grid, p.states]))
        raise
    csv = io.write_csv(out / "trajectory.csv", header, np.column_stack([traj.t_grid, traj.states]))
    report = {"model": model.describe(), "x0": x0, "final": traj.states[-1], "hit_times": traj.hit_times,
              "steps": len(traj.t_grid) - 1}
    return report, [csv], EXIT_OK


def cmd_mc(conf, out, threads):
    s = conf["mc"]
    model = build_model(conf["model"])
    x0 = _x0(s, model)
    summary = monte_carlo(model, x0, s["T"], s["dt"], int(s["paths"]), s["scheme"], s["checkpoints"],
                          conf["master_seed"], s["eps_hit"], threads, int(s["block_size"]),
                          s["boundary_policy"])
    return {"model": model.describe(), "x0": x0, **summary.to_report()}, [], EXIT_OK


def cmd_check(conf, out, threads):
    s = conf["check"]
    model = build_model(conf["model"])
    assumptions = s["assumptions"]
    if assumptions is None:
        assumptions = {POSITIVE_ORTHANT: ["A3", "A1", "linear_growth"],
                       OPEN_UNIT_BALL: ["unit_ball", "linear_growth"]}.get(model.domain, ["A1", "linear_growth"])
    seed = conf["master_seed"]
    reports = {}
    for name in assumptions:
        if name == "A3":
            if model.domain != POSITIVE_ORTHANT:
                raise ConfigError("A3 applies to positive-orthant models")
            grid = (np.asarray(s["r_grid"], dtype=float) if s["r_grid"] is not None
                    else default_r_grid(s["R"], s["r_min"], int(s["r_count"])))
            envs = [envelope(model, i, grid, s["R"], int(s["samples"]), seed, threads)
                    for i in range(1, model.n + 1)]
            rep = check_A3(model, envs, s["delta"], s["R"], s["sigma_tilde"], samples=int(s["band_samples"]),
                           seed=seed)
            reports["A3"] = {**rep.to_report(), "envelopes": [e.to_report() for e in envs]}
        elif name == "A1":
            mod = _modulus(s["modulus"], s["alpha"], s["epsilon"])
            reports["A1"] = check_A1_modulus(model, mod, s["R"], int(s["pairs"]), seed).to_report()
        elif name == "linear_growth":
            reports["linear_growth_mu"] = check_linear_growth(
                model.mu, model.n, s["R_list"], model.domain, int(s["samples"]), seed, name="mu").to_report()
            reports["linear_growth_sigma"] = check_linear_growth(
                model.sigma, model.n, s["R_list"], model.domain, int(s["samples"]), seed,
                name="sigma").to_report()
        elif name == "unit_ball":
            if not hasattr(model, "kappa"):
                raise ConfigError("unit_ball check needs a unit_ball model")
            theta = model.params["theta"]
            reports["unit_ball"] = check_unit_ball_condition(model.c, theta, model.n).to_report()
        else:
            raise ConfigError(f"unknown assumption {name!r}; expected A3, A1, linear_growth or unit_ball")
    verdicts = [r["verdict"] for r in reports.values()]
    overall = FAIL if FAIL in verdicts else (PASS if all(v == PASS for v in verdicts) else "inconclusive")
    code = EXIT_VERDICT if overall == FAIL else EXIT_OK
    return {"model": model.describe(), "verdict": overall, "checks": reports}, [], code


def cmd_compare(conf, out, threads):
    s = conf["compare"]
    model = build_model(conf["model"])
    x0 = _x0(s, model)
    seed = conf["master_seed"]
    setup = setup_for(model, s["i"], x0, R=s["R"], samples=int(s["samples"]), seed=seed)
    rep = couple(model, s["i"], x0, s["T"], s["dt"], seed, setup, s["C_tol"], s["eps_hit"], s["scheme"],
                 int(s["path_index"]))
    files = []
    if s["series"]:
        files.append(io.write_csv(out / "coupling.csv", ["t", "p", "z"], rep.series()))
    report = {"model": model.describe(), "precondition_margin": setup.precondition_margin(), **rep.to_report()}
    return report, files, EXIT_VERDICT if rep.verdict == "violated" else EXIT_OK


def _diffusion(s):
    kind = s["diffusion"]

    def need(*keys):
        missing = [k for k in keys if s.get(k) is None]
        if missing:
            raise ConfigError(f"classify diffusion {kind!r} needs {missing}")

    if kind == "ball_radial":
        need("n", "kappa")
        return ball_radial_diffusion(int(s["n"]), float(s["kappa"]))
    if kind == "bessel":
        need("c")
        return bessel_diffusion(float(s["c"]))
    if kind == "wright_fisher":
        need("p", "q")
        return wright_fisher_diffusion(float(s["p"]), float(s["q"]))
    if kind == "custom":
        need("drift", "diff_sq", "interval")
        interval = [math.inf if v == "inf" else -math.inf if v == "-inf" else float(v) for v in s["interval"]]
        return diffusion_from_expr(str(s["drift"]), str(s["diff_sq"]), interval, s["y0"])
    raise ConfigError(f"unknown diffusion {kind!r}; expected ball_radial, bessel, wright_fisher or custom")


def cmd_classify(conf, out, threads):
    s = conf["classify"]
    try:
        d = _diffusion(s)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    endpoints = s["endpoints"] if s["endpoints"] is not None else ["l", "r"]
    verdicts = [classify(d, e).to_report() for e in endpoints]
    return {"diffusion": d.describe(), "verdicts": verdicts}, [], EXIT_OK


def cmd_modulus(conf, out, threads):
    s = conf["modulus"]
    mod = _modulus(s["rho"], s["alpha"], s["epsilon"])
    ladder = build_ladder(mod, int(s["K"]), int(s["grid_points"]))
    K = ladder.K
    sk = io.write_csv(out / "modulus_sk.csv", ["k", "s_k"], np.column_stack([np.arange(K + 1), ladder.s]))
    t = np.linspace(s["t_min"], s["t_max"], int(s["t_count"]))
    phi = np.column_stack([t] + [ladder.phi(k, t) for k in range(1, K + 1)])
    grid = io.write_csv(out / "modulus_phi.csv", ["t"] + [f"phi_{k}" for k in range(1, K + 1)], phi)
    report = {"modulus": mod.name, "epsilon": mod.epsilon, "K": K, "s": ladder.s,
              "phi_at_1": [float(ladder.phi(k, 1.0)) for k in range(1, K + 1)]}
    return report, [sk, grid], EXIT_OK


def cmd_uniqueness(conf, out, threads):
    s = conf["uniqueness"]
    model = build_model(conf["model"])
    x0 = _x0(s, model)
    rep = uniqueness_gap(model, x0, s["T"], s["dt"], conf["master_seed"], s["scheme_a"], s["scheme_b"],
                         int(s["refinements"]), int(s["paths"]), s["eps_hit"])
    return {"model": model.describe(), "x0": x0, **rep.to_report()}, [], EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate, "mc": cmd_mc, "check": cmd_check, "compare": cmd_compare,
    "classify": cmd_classify, "modulus": cmd_modulus, "uniqueness": cmd_uniqueness,
}


# ---------------------------------------------------------------------------
# entry point


def run(argv=None) -> int:
    started = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise ConfigError("a command is required; see degsde --help")
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        raw = cfg.apply_overrides(cfg.load(args.config), args.set)
        if args.seed is not None:
            raw["master_seed"] = args.seed
        conf = cfg.resolve(raw, args.command)
        out = io.output_dir(args.out, conf.get("output_dir"))
        report, files, code = COMMANDS[args.command](conf, out, args.threads)
        rp = io.write_json(out / "report.json", {"command": args.command, "result": report})
        manifest = {
            "command": args.command,
            "config": conf,
            "outputs": sorted(p.name for p in [rp, *files]),
            "exit_code": code,
            "runtime": {"started": stamp, "seconds": time.perf_counter() - started, "threads": args.threads,
                        "python": platform.python_version(), "numpy": np.__version__,
                        "package": __version__},
        }
        io.write_json(out / "manifest.json", manifest)
        print(str(rp))
        return code
    except DegsdeError as exc:
        print(f"degsde: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError, KeyError) as exc:
        # bad values that slipped past validation are configuration problems
        print(f"degsde: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
