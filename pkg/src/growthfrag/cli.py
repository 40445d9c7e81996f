"""Command-line entry point: ``growthfrag <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 1 configuration error, 2 assumption check failed
(the report is still written), 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    ConsistencyError,
    detect_limit_cycle,
    floquet_compare,
    hopf_scan,
    local_stability,
    steady_states,
)
from .config import Config, ConfigError, load
from .eigen import closed_form_moment, solve_perron
from .model import (
    CONSTANT_TWO,
    AssumptionError,
    ModelError,
    Nonlinearity,
    check_assumption_f,
    check_assumption_fg,
    check_assumption_prion,
    derive_params,
)
from .pde import (
    DRIFT,
    DRIFT_DEATH,
    ENTROPIES,
    LINEAR,
    PRION,
    Companion,
    GREReference,
    NumericalError,
    Scenario,
    export_snapshot,
    lognormal_bump,
    rescaled_profile,
    run,
    uniform_block,
    write_csv,
)
from .plotting import phase_plane, time_series
from .reduced import COMPONENTS, ReducedParams, simulate

log = logging.getLogger("growthfrag")

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 1, 2, 3
FIGURE_DT = 1e-2


class AssumptionFailed(Exception):
    """Raised after the failing report has been written."""


class Context:
    def __init__(self, args, config: Config | None):
        self.args = args
        self.config = config
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []

    def path(self, name) -> Path:
        p = self.out / name
        self.outputs.append(name)
        return p

    def cfg(self) -> Config:
        if self.config is None:
            raise ConfigError("this subcommand needs --config", ["--config"])
        return self.config

    def dt(self, default):
        return self.args.dt if self.args.dt is not None else default


# ---------------------------------------------------------------------------
# shared builders
# ---------------------------------------------------------------------------


def _profile_moment(cfg: Config, powerlaw, kernel, alpha, n=None):
    if powerlaw.nu == 1 and kernel.kind == CONSTANT_TWO:
        return closed_form_moment(powerlaw, alpha)
    grid = cfg.grid(powerlaw, kernel, n)
    return solve_perron(powerlaw, kernel, grid, cfg.get("eigen.tol", 1e-8)).moment(alpha)


def reduced_params(cfg: Config, system: str, grid_n=None) -> ReducedParams:
    pl = cfg.powerlaw()
    kernel = cfg.kernel()
    kw = {}
    if system in ("WZ", "WZ-perturbed", "WQ-drift", "WQ", "WQ-perturbed", "VWQ"):
        kw["f"] = cfg.nonlinearity("f")
        cfg.require("closure.p")
        kw["p"] = cfg["closure.p"]
    if system in ("WQ", "WQ-perturbed"):
        kw["g"] = cfg.nonlinearity("g")
        cfg.require("closure.q")
        kw["q"] = cfg["closure.q"]
    if system in ("WZ", "WZ-perturbed", "WQ-drift"):
        kw["mp"] = _profile_moment(cfg, pl, kernel, kw["p"], grid_n)
    if system == "VWQ":
        cfg.require("prion.lam", "prion.delta")
        kw.update(lam=cfg["prion.lam"], delta=cfg["prion.delta"])
    if system == "UP":
        kw["control"] = cfg.control()
    if system == "W-ODE":
        ctrl = cfg.control()
        kw["V2"] = ctrl.V
    params = ReducedParams(pl, **kw)
    params.validate(system)
    return params


def _system(cfg: Config) -> str:
    cfg.require("ode.system")
    system = cfg["ode.system"]
    if system not in COMPONENTS:
        raise ConfigError(f"ode.system must be one of {sorted(COMPONENTS)}, got {system!r}")
    return system


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_eigen(ctx: Context):
    cfg = ctx.cfg()
    pl, kernel = cfg.powerlaw(), cfg.kernel()
    grid = cfg.grid(pl, kernel, ctx.args.grid_n)
    ep = solve_perron(pl, kernel, grid, cfg.get("eigen.tol", 1e-8))
    ep.to_csv(ctx.path("eigenpair.csv"))
    rows = [("lambda", ep.lam), ("adjoint_lambda", ep.adjoint_lam), ("residual", ep.residual),
            ("M0", ep.moment(0)), ("M1", ep.moment(1)), ("x_max", grid.x_max), ("n", grid.n),
            ("k", pl.k)]
    write_csv(ctx.path("eigen_summary.csv"), ("key", "value"), rows)
    log.info("lambda = %.12g (adjoint %.12g), residual %.3e", ep.lam, ep.adjoint_lam, ep.residual)


def _scenario(cfg: Config, pl, kernel, grid, ep) -> Scenario:
    kind = cfg.get("pde.scenario", LINEAR)
    kw = {}
    if kind == LINEAR:
        kw["control"] = cfg.control()
    elif kind in (DRIFT, DRIFT_DEATH, PRION):
        cfg.require("closure.p")
        kw.update(f=cfg.nonlinearity("f"), p=cfg["closure.p"])
        if kind == DRIFT_DEATH:
            cfg.require("closure.q")
            kw.update(g=cfg.nonlinearity("g"), q=cfg["closure.q"],
                      mp_ref=ep.moment(cfg["closure.p"]), mq_ref=ep.moment(cfg["closure.q"]))
        if kind == PRION:
            cfg.require("prion.lam", "prion.delta", "pde.monomer0")
            kw.update(lam=cfg["prion.lam"], delta=cfg["prion.delta"],
                      mp_ref=ep.moment(cfg["closure.p"]), m1_ref=ep.moment(1.0))
    else:
        raise ConfigError(f"unknown pde.scenario {kind!r}")
    return Scenario(kind, pl, kernel, grid, **kw)


def _initial(cfg: Config, grid, ep, pl, seed):
    kind = cfg.get("pde.initial", "lognormal")
    mass = cfg.get("pde.mass", 1.0)
    if kind == "eigen":
        return cfg.get("pde.Q0", 1.0) * rescaled_profile(ep.U, grid, cfg.get("pde.W0", 1.0), pl.k)
    if kind == "lognormal":
        return lognormal_bump(grid, cfg.get("pde.median", 1.0), cfg.get("pde.sigma", 0.5), mass)
    if kind == "block":
        cfg.require("pde.lo", "pde.hi")
        return uniform_block(grid, cfg["pde.lo"], cfg["pde.hi"], mass)
    if kind == "random":
        rng = np.random.default_rng(seed)
        return lognormal_bump(grid, float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.3, 0.8)), mass)
    raise ConfigError(f"pde.initial must be eigen, lognormal, block or random, got {kind!r}")


def cmd_simulate_pde(ctx: Context):
    cfg = ctx.cfg()
    cfg.require("pde.scenario", "time.t_end")
    pl, kernel = cfg.powerlaw(), cfg.kernel()
    grid = cfg.grid(pl, kernel, ctx.args.grid_n)
    ep = solve_perron(pl, kernel, grid, cfg.get("eigen.tol", 1e-8))
    sc = _scenario(cfg, pl, kernel, grid, ep)
    u0 = _initial(cfg, grid, ep, pl, ctx.args.seed)
    companion = None
    if cfg.get("pde.manifold", False):
        w0 = cfg.get("pde.W0", 1.0)
        companion = Companion(w0, grid.integrate(u0 * ep.phi) / w0**pl.k)
    gre_ref = None
    if "pde.entropy" in cfg:
        name = cfg["pde.entropy"]
        if name not in ENTROPIES:
            raise ConfigError(f"pde.entropy must be one of {sorted(ENTROPIES)}")
        gre_ref = GREReference(ep, ENTROPIES[name])
    result = run(sc, u0, cfg["time.t_end"], sample_dt=cfg.get("time.sample_dt", 0.1),
                 dt=ctx.args.dt if ctx.args.dt is not None else cfg.get("time.dt"),
                 monomer0=cfg.get("pde.monomer0"), eigenpair=ep, companion=companion,
                 gre_reference=gre_ref, snapshot_times=cfg.get("pde.snapshots", ()))
    result.diagnostics.to_csv(ctx.path("diagnostics.csv"))
    for snap in result.snapshots:
        export_snapshot(snap, grid, ctx.path(f"snapshot_t{snap.t:.6g}.csv"))
    log.info("%d steps, final M1 = %.6g", result.steps, grid.moment(result.state.u, 1.0))


def cmd_simulate_ode(ctx: Context):
    cfg = ctx.cfg()
    system = _system(cfg)
    cfg.require("ode.y0", "time.t_end")
    params = reduced_params(cfg, system, ctx.args.grid_n)
    traj = simulate(system, params, cfg["ode.y0"], cfg["time.t_end"],
                    dt=ctx.dt(cfg.get("time.dt", 1e-3)), stride=cfg.get("ode.stride", 1))
    traj.to_csv(ctx.path("trajectory.csv"))
    time_series(ctx.path("trajectory.svg"), traj.t, [(n, traj[n]) for n in traj.names],
                title=system)


def _assumptions(system, params: ReducedParams):
    if system in ("WZ", "WZ-perturbed", "WQ-drift"):
        return check_assumption_f(params.f, params.mu)
    if system in ("WQ", "WQ-perturbed"):
        return check_assumption_fg(params.f, params.g, params.p, params.q, params.k)
    if system == "VWQ":
        return check_assumption_prion(params.f, params.lam, params.delta, params.mu, params.k)
    return None


def _write_assumptions(ctx, report):
    rows = [("name", report.name), ("passed", report.passed)]
    rows += [(k, ";".join(map(repr, v)) if isinstance(v, list) else v) for k, v in report.values.items()]
    rows += [("message", m) for m in report.messages]
    write_csv(ctx.path("assumptions.csv"), ("key", "value"), rows)
    for m in report.messages:
        log.warning("%s", m)


def cmd_steady_states(ctx: Context):
    cfg = ctx.cfg()
    system = _system(cfg)
    params = reduced_params(cfg, system, ctx.args.grid_n)
    check = _assumptions(system, params)
    if check is not None:
        _write_assumptions(ctx, check)
    report = steady_states(system, params)
    report.to_csv(ctx.path("steady_states.csv"))
    for i, eq in enumerate(report.equilibria):
        local_stability(system, eq, params).to_csv(ctx.path(f"stability_{i}.csv"))
    if check is not None and not check.passed:
        raise AssumptionFailed(f"assumption check '{check.name}' failed")


def cmd_hopf_scan(ctx: Context):
    cfg = ctx.cfg()
    params = reduced_params(cfg, "VWQ")
    check = _assumptions("VWQ", params)
    _write_assumptions(ctx, check)
    if not check.passed:
        raise AssumptionFailed("prion assumption check failed")
    report = hopf_scan(params, samples=cfg.get("hopf.samples", 101))
    report.to_csv(ctx.path("hopf.csv"))
    write_csv(ctx.path("psi.csv"), ("p", "psi"), zip(report.p_grid, report.psi_samples))
    log.info("p0 = %.9g, p1 = %.9g, a'(p0) = %.6g", report.p0, report.p1, report.a_prime)


def cmd_limit_cycle(ctx: Context):
    cfg = ctx.cfg()
    system = _system(cfg)
    cfg.require("ode.y0", "time.t_end")
    params = reduced_params(cfg, system)
    level = cfg.get("cycle.level")
    if level is None:
        eq = steady_states(system, params)
        if not eq.found:
            raise AssumptionFailed("no equilibrium to define the section")
        level = eq.equilibria[0]["W"]
    traj = simulate(system, params, cfg["ode.y0"], cfg["time.t_end"],
                    dt=ctx.dt(cfg.get("time.dt", 1e-3)), stride=cfg.get("ode.stride", 1))
    traj.to_csv(ctx.path("trajectory.csv"))
    report = detect_limit_cycle(traj, level, burn_in=cfg.get("cycle.burn_in", 0.0))
    report.to_csv(ctx.path("cycle.csv"))
    log.info("cycle detected: %s, period %.6g", report.detected, report.period)


def cmd_floquet(ctx: Context):
    cfg = ctx.cfg()
    pl = cfg.powerlaw()
    report = floquet_compare(pl, cfg.control())
    report.to_csv(ctx.path("floquet.csv"))
    write_csv(ctx.path("orbit.csv"), ("t", "W"), zip(report.t, report.W))
    log.info("Lambda_F = %.12g, Lambda(Vbar, Rbar) = %.12g, mean Lambda = %.12g",
             report.lambda_F, report.lambda_bar, report.lambda_mean)


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


FIG1_T_END = {0.5: 150.0, 2.0: 400.0}  # the node's slow eigenvalue is about -0.048


def figure_1(out: Path, dt: float = FIGURE_DT, t_end: dict = FIG1_T_END, stride: int = 10):
    """WZ system, gamma = 0.1, mu = 1, f = 2 exp(-x): focus for p = 0.5, node for p = 2."""
    pl = derive_params(1.0, 1.0, 1.0, 0.1, 1.0)
    f = Nonlinearity("exp-decay", {"a": 2.0})
    results = {}
    curves, points = [], []
    for p in (0.5, 2.0):
        params = ReducedParams(pl, f=f, p=p, mp=closed_form_moment(pl, p))
        eq = steady_states("WZ", params).equilibria[0]
        stab = local_stability("WZ", eq, params)
        traj = simulate("WZ", params, [0.5, 0.5 * eq["Z"]], t_end[p], dt=dt, stride=stride)
        tag = f"p{p:g}"
        traj.to_csv(out / f"fig1_{tag}.csv")
        stab.to_csv(out / f"fig1_{tag}_stability.csv")
        curves.append((f"p={p:g} ({stab.classification})", traj["W"], traj["Z"] / eq["Z"]))
        results[p] = (params, eq, stab, traj)
    points.append(("steady state", 1.0, 1.0))
    phase_plane(out / "fig1.svg", curves, "W", "Z / Z_inf", "WZ system, gamma = 0.1", points)
    return results


def figure_2(out: Path, dt: float = FIGURE_DT, t_end: float = 300.0, burn_in: float = 100.0,
             stride: int = 10):
    """WQ system with f = 1 + exp(-1) - exp(-x^4), g = 0.9 x, gamma = 1, p = 2, q = 5."""
    pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)
    params = ReducedParams(pl, f=Nonlinearity("shifted-gaussian-quartic"),
                           g=Nonlinearity("linear", {"c": 0.9}), p=2.0, q=5.0)
    eq = steady_states("WQ", params).equilibria[0]
    stab = local_stability("WQ", eq, params)
    traj = simulate("WQ", params, [1.2, 1.0], t_end, dt=dt)
    cycle = detect_limit_cycle(traj, eq["W"], burn_in=burn_in)
    traj.to_csv(out / "fig2_trajectory.csv", stride=stride)
    stab.to_csv(out / "fig2_stability.csv")
    cycle.to_csv(out / "fig2_cycle.csv")
    phase_plane(out / "fig2.svg", [("trajectory", traj["W"][::stride], traj["Q"][::stride])],
                "W", "Q", "WQ system: limit cycle", [("equilibrium", eq["W"], eq["Q"])])
    time_series(out / "fig2_time.svg", traj.t[::stride],
                [("W", traj["W"][::stride]), ("Q", traj["Q"][::stride])])
    return params, eq, stab, traj, cycle


def figure_3(out: Path, dt: float = FIGURE_DT, t_end: float = 600.0, burn_in: float = 300.0,
             stride: int = 10, p: float = 4.0):
    """Prion VWQ system, lambda = 0.9, delta = 0.2, mu = gamma = 1, f = 6.3(1.1 - exp(-x^2/20))."""
    pl = derive_params(1.0, 1.0, 1.0, 1.0, 1.0)
    params = ReducedParams(pl, f=Nonlinearity("prion-sigmoid", {"a": 6.3, "b": 1.1, "s": 20.0}),
                           p=p, lam=0.9, delta=0.2)
    eq = steady_states("VWQ", params).equilibria[0]
    hopf = hopf_scan(params)
    traj = simulate("VWQ", params, [1.05 * eq["V"], eq["W"], eq["Q"]], t_end, dt=dt)
    cycle = detect_limit_cycle(traj, eq["W"], burn_in=burn_in)
    traj.to_csv(out / "fig3_trajectory.csv", stride=stride)
    hopf.to_csv(out / "fig3_hopf.csv")
    cycle.to_csv(out / "fig3_cycle.csv")
    phase_plane(out / "fig3.svg", [("trajectory", traj["W"][::stride], traj["Q"][::stride])],
                "W", "Q", f"prion system, p = {p:g}", [("equilibrium", eq["W"], eq["Q"])])
    time_series(out / "fig3_time.svg", traj.t[::stride],
                [(n, traj[n][::stride]) for n in traj.names])
    return params, eq, hopf, traj, cycle


def cmd_figure(ctx: Context):
    number = ctx.args.number
    before = set(p.name for p in ctx.out.iterdir())
    dt = ctx.dt(FIGURE_DT)
    if number == 1:
        figure_1(ctx.out, dt)
    elif number == 2:
        figure_2(ctx.out, dt)
    else:
        figure_3(ctx.out, dt)
    ctx.outputs.extend(sorted(p.name for p in ctx.out.iterdir() if p.name not in before
                              and p.name != "manifest.json"))


COMMANDS = {
    "eigen": cmd_eigen,
    "simulate-pde": cmd_simulate_pde,
    "simulate-ode": cmd_simulate_ode,
    "steady-states": cmd_steady_states,
    "hopf-scan": cmd_hopf_scan,
    "limit-cycle": cmd_limit_cycle,
    "floquet-compare": cmd_floquet,
    "figure": cmd_figure,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="growthfrag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name == "figure":
            sp.add_argument("number", type=int, choices=(1, 2, 3))
        sp.add_argument("--config", help="key=value configuration file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--dt", type=float, default=None, help="time step override")
        sp.add_argument("--grid-n", type=int, default=None, help="cell count override")
        sp.add_argument("--quiet", action="store_true")
    return parser


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("numpy", "scipy", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "missing"
    out["growthfrag"] = __version__
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    start = time.perf_counter()
    code, error = EXIT_OK, None
    ctx = None
    try:
        config = load(args.config) if args.config else None
        ctx = Context(args, config)
        COMMANDS[args.command](ctx)
    except ConfigError as exc:
        code, error = EXIT_CONFIG, str(exc)
    except (AssumptionFailed, AssumptionError) as exc:
        code, error = EXIT_ASSUMPTION, str(exc)
    except ModelError as exc:
        code, error = EXIT_CONFIG, str(exc)
    except (NumericalError, ConsistencyError) as exc:
        code, error = EXIT_NUMERICAL, str(exc)
    if error:
        log.error("%s", error)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": args.command if args.command != "figure" else f"figure {args.number}",
        "config_path": args.config,
        "config": ctx.config.echo() if ctx and ctx.config else {},
        "flags": {"seed": args.seed, "dt": args.dt, "grid_n": args.grid_n},
        "versions": _versions(),
        "wall_time_s": round(time.perf_counter() - start, 3),
        "outputs": ctx.outputs if ctx else [],
        "exit_code": code,
        "error": error,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
