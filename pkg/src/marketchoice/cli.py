"""
Command-line entry point.

Every subcommand writes CSV (with ``#`` metadata comments) and/or JSON into
``--out-dir`` together with ``manifest.json``, which records the fully
resolved configuration.  Passing that manifest back through ``--config``
reproduces the run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Errors
are also reported as one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import ewa_sim, fp_analysis, large_deviation, nash_solver
from .fp_analysis import LearningParams
from .market_core import Aggregates, GameParams

OUT_DIR_ENV = "MARKETCHOICE_OUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# --- output helpers -----------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows, meta: dict) -> Path:
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {json.dumps(v, sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())
    return path


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


# --- configuration ------------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    # a manifest carries the resolved config under "config"
    if "subcommand" in data and "config" in data:
        data = dict(data["config"], seed=data.get("seed", 0))
    return data


def _game(args, cfg: dict) -> GameParams:
    d = dict(cfg.get("params", {}))
    for name in ("mu_b", "mu_a", "sigma_b", "sigma_a"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    if getattr(args, "theta1", None) is not None:
        d["theta_1"], d["theta_2"] = args.theta1, 1.0 - args.theta1
    if getattr(args, "pb", None) is not None:
        d["pb_1"], d["pb_2"] = args.pb, 1.0 - args.pb
    try:
        return GameParams.from_dict(d)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _learning(args, cfg: dict) -> LearningParams:
    d = dict(cfg.get("learning", {}))
    for name in ("r", "alpha", "beta"):
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    if getattr(args, "beta_inv", None) is not None:
        d["beta"] = 1.0 / args.beta_inv
    try:
        return LearningParams.from_dict(d)
    except (TypeError, ValueError, ZeroDivisionError) as e:
        raise ConfigError(str(e)) from e


def _opt(args, cfg: dict, name: str, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


class Run:
    """Collects outputs and writes the manifest."""

    def __init__(self, args, name: str):
        out = args.out_dir or os.environ.get(OUT_DIR_ENV) or "."
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.name = name
        self.seed = args.seed
        self.files: list[str] = []
        self.config: dict = {}

    def path(self, fname: str) -> Path:
        self.files.append(fname)
        return self.dir / fname

    def meta(self) -> dict:
        return {"subcommand": self.name, "seed": self.seed, "version": _version(), "config": self.config}

    def finish(self):
        manifest = dict(self.meta(), outputs=self.files)
        write_json(self.dir / "manifest.json", manifest)
        print(json.dumps({"status": "ok", "subcommand": self.name, "outputs": self.files,
                          "out_dir": str(self.dir)}))


# --- subcommands --------------------------------------------------------------------

def cmd_nash(args, cfg):
    params = _game(args, cfg)
    grid_n = int(_opt(args, cfg, "grid_n", nash_solver.DEFAULT_GRID_N))
    if grid_n < 16:
        raise ConfigError("grid_n must be at least 16")
    run = Run(args, "nash")
    run.config = {"params": params.to_dict(), "grid_n": grid_n}
    eq = nash_solver.find_equilibria(params, grid_n)
    write_csv(run.path("equilibria.csv"), ["pbar1", "pbar2", "kind", "gap1", "gap2"],
              [(e.aggregates[0], e.aggregates[1], e.kind, e.payoff_gap_1, e.payoff_gap_2) for e in eq],
              run.meta())
    rows = []
    for c in (1, 2):
        for k, line in enumerate(nash_solver.equal_payoff_curve(c, params, grid_n)):
            rows += [(c, k, x, y) for x, y in line]
    write_csv(run.path("curves.csv"), ["class", "piece", "pbar1", "pbar2"], rows, run.meta())
    region = nash_solver.classify(eq)
    write_json(run.path("region.json"), region.__dict__)
    run.finish()


def cmd_phase_diagram(args, cfg):
    params = _game(args, cfg)
    n_theta = int(_opt(args, cfg, "n_theta", 64))
    n_pb = int(_opt(args, cfg, "n_pb", 64))
    grid_n = int(_opt(args, cfg, "grid_n", 64))
    if n_theta < 2 or n_pb < 2:
        raise ConfigError("grid must have at least two cells per axis")
    run = Run(args, "phase-diagram")
    run.config = {"params": params.to_dict(), "n_theta": n_theta, "n_pb": n_pb, "grid_n": grid_n}
    thetas = nash_solver.cell_centres(n_theta, 0.0, 1.0)
    pbs = nash_solver.cell_centres(n_pb, 0.0, 0.5)
    grid = nash_solver.phase_diagram(thetas, pbs, params, grid_n, jobs=args.jobs)
    rows = []
    for row in grid:
        for cell in row:
            r = cell.region
            rows.append((cell.theta_1, cell.pb, r.has_pot_heterogeneous, r.has_pure_split,
                         r.partially_het_count, not (r.has_pot_heterogeneous and r.has_pure_split),
                         cell.analytic_split))
    write_csv(run.path("phase_diagram.csv"),
              ["theta1", "pb", "pot_heterogeneous", "pure_split", "partial_count", "exclusive", "analytic_split"],
              rows, run.meta())
    brow = []
    for t in thetas:
        br = nash_solver.phase_boundary_roots(float(t), params)
        brow += [(t, "seller", x) for x in br.seller_saturated] + [(t, "buyer", x) for x in br.buyer_saturated]
    write_csv(run.path("boundary.csv"), ["theta1", "branch", "pb"], brow, run.meta())
    run.finish()


def _steady_row(sol, learning):
    return {
        "alpha": learning.alpha, "beta": learning.beta,
        "aggregates": list(sol.aggregates), "kind": sol.kind, "levels": list(sol.levels),
        "peaks": [{"label": p.label, "delta": p.point.delta, "A1": p.point.state.A_1,
                   "A2": p.point.state.A_2, "weight": p.weight} for p in sol.peaks],
        "notes": sol.notes,
    }


def _solve_one(task):
    params, learning, n_steps, t_span = task
    return large_deviation.solve_steady_state(params, learning, n_steps=n_steps, t_span=t_span)


def cmd_steady_state(args, cfg):
    params = _game(args, cfg)
    learning = _learning(args, cfg)
    n_steps = int(_opt(args, cfg, "n_steps", large_deviation.DEFAULT_N_STEPS))
    t_span = float(_opt(args, cfg, "t_span", large_deviation.DEFAULT_T_SPAN))
    alphas = _opt(args, cfg, "alphas", None) or [learning.alpha]
    n_curve = int(_opt(args, cfg, "curve_points", 101))
    run = Run(args, "steady-state")
    run.config = {"params": params.to_dict(), "learning": learning.to_dict(), "alphas": list(alphas),
                  "n_steps": n_steps, "t_span": t_span, "curve_points": n_curve}
    tasks = [(params, learning.replace(alpha=float(a)), n_steps, t_span) for a in alphas]
    sols = _map(_solve_one, tasks, args.jobs)
    write_json(run.path("steady_state.json"),
               {"solutions": [_steady_row(s, t[1]) for s, t in zip(sols, tasks)]})
    if n_curve > 1:
        grid = np.linspace(0.0, 1.0, n_curve)
        rows = []
        for a in alphas:
            cur = large_deviation.tilde_p_curve(params, learning.replace(alpha=float(a)), grid, n_steps, t_span)
            rows += [(a, x, p) for x, p in zip(cur.x, cur.p)]
        write_csv(run.path("tilde_p.csv"), ["alpha", "pbar1", "tilde_p1"], rows, run.meta())
    run.finish()


def _critical_one(task):
    beta, params, lo, hi, n_grid, n_steps, t_span = task
    try:
        return large_deviation.critical_alphas(beta, params, (lo, hi), n_grid, n_steps=n_steps, t_span=t_span)
    except large_deviation.EmptyWedgeError:
        return large_deviation.CriticalAlphas(math.nan, math.nan, math.nan)


def cmd_critical_alphas(args, cfg):
    params = _game(args, cfg)
    beta_invs = _opt(args, cfg, "beta_invs", None) or [0.11]
    lo = float(_opt(args, cfg, "alpha_min", 1e-4))
    hi = float(_opt(args, cfg, "alpha_max", 0.5))
    n_grid = int(_opt(args, cfg, "alpha_grid", 24))
    n_steps = int(_opt(args, cfg, "n_steps", large_deviation.DEFAULT_N_STEPS))
    t_span = float(_opt(args, cfg, "t_span", large_deviation.DEFAULT_T_SPAN))
    if not 0 < lo < hi <= 1:
        raise ConfigError("need 0 < alpha_min < alpha_max <= 1")
    if any(b <= 0 for b in beta_invs):
        raise ConfigError("beta_inv values must be positive")
    run = Run(args, "critical-alphas")
    run.config = {"params": params.to_dict(), "beta_invs": list(beta_invs), "alpha_min": lo, "alpha_max": hi,
                  "alpha_grid": n_grid, "n_steps": n_steps, "t_span": t_span}
    tasks = [(1.0 / b, params, lo, hi, n_grid, n_steps, t_span) for b in beta_invs]
    res = _map(_critical_one, tasks, args.jobs)
    write_csv(run.path("critical_alphas.csv"), ["beta_inv", "alpha_c", "alpha_c_prime", "alpha_c_dprime"],
              [(b,) + tuple(r) for b, r in zip(beta_invs, res)], run.meta())
    run.finish()


def cmd_fixed_points(args, cfg):
    params = _game(args, cfg)
    learning = _learning(args, cfg)
    pbar1 = _opt(args, cfg, "pbar1", None)
    pbar2 = _opt(args, cfg, "pbar2", None)
    if pbar1 is None:
        pbar1 = nash_solver.symmetric_nash_value(params)
        if pbar1 is None:
            raise ConfigError("no interior symmetric equilibrium; pass --pbar1")
    if pbar2 is None:
        pbar2 = 1.0 - pbar1
    if not (0 <= pbar1 <= 1 and 0 <= pbar2 <= 1):
        raise ConfigError("aggregates must lie in [0, 1]")
    c = int(_opt(args, cfg, "cls", 1))
    run = Run(args, "fixed-points")
    run.config = {"params": params.to_dict(), "learning": learning.to_dict(), "pbar1": pbar1, "pbar2": pbar2,
                  "cls": c}
    fps = fp_analysis.fixed_points(Aggregates(pbar1, pbar2), params, learning, c)
    rows = []
    for p in fps.points:
        cov = p.peak_covariance if p.peak_covariance is not None else np.full((2, 2), np.nan)
        rows.append((p.delta, p.state.A_1, p.state.A_2, p.stable, cov[0, 0], cov[0, 1], cov[1, 1]))
    write_csv(run.path("fixed_points.csv"), ["delta", "A1", "A2", "stable", "cov11", "cov12", "cov22"],
              rows, run.meta())
    out = {"count": len(fps), "payoffs": {"P": fps.payoffs.P, "Q": fps.payoffs.Q}}
    try:
        out["thresholds"] = fp_analysis.threshold_alphas_from_payoffs(fps.payoffs.P, learning.beta)._asdict()
    except fp_analysis.MissingTransitionError as e:
        out["thresholds"] = {"error": str(e)}
    write_json(run.path("fixed_points.json"), out)
    run.finish()


def cmd_action_path(args, cfg):
    params = _game(args, cfg)
    learning = _learning(args, cfg)
    n_steps = int(_opt(args, cfg, "n_steps", large_deviation.DEFAULT_N_STEPS))
    t_span = float(_opt(args, cfg, "t_span", large_deviation.DEFAULT_T_SPAN))
    pbar1 = _opt(args, cfg, "pbar1", None)
    if pbar1 is None:
        pbar1 = nash_solver.symmetric_nash_value(params)
        if pbar1 is None:
            raise ConfigError("no interior symmetric equilibrium; pass --pbar1")
    aggr = Aggregates(pbar1, 1.0 - pbar1)
    fps = fp_analysis.fixed_points(aggr, params, learning, 1)
    st = fps.stable
    if len(st) < 2:
        raise ConfigError(f"only {len(st)} stable fixed point(s) at these settings; no transition to compute")
    run = Run(args, "action-path")
    run.config = {"params": params.to_dict(), "learning": learning.to_dict(), "pbar1": pbar1,
                  "n_steps": n_steps, "t_span": t_span}
    model = large_deviation.EWAModel(fps.payoffs, learning.alpha, learning.beta)
    rows, summary = [], []
    labels = large_deviation.label_stable_points(fps)
    for i in range(len(st) - 1):
        sad = np.array(fps.saddle_between(i, i + 1).state)
        for a, b in ((i, i + 1), (i + 1, i)):
            spec = large_deviation.minimize_action(model, np.array(st[a].state), sad, n_steps, t_span,
                                                   to_point=np.array(st[b].state), strict=True)
            name = f"{labels[a]}->{labels[b]}"
            rows += [(name, t, x[0], x[1]) for t, x in zip(spec.path.times, spec.path.states)]
            summary.append({"transition": name, "action": spec.min_action, "floor_active": spec.path.floor_active})
    write_csv(run.path("paths.csv"), ["transition", "t", "A1", "A2"], rows, run.meta())
    write_json(run.path("actions.json"), {"transitions": summary})
    run.finish()


def cmd_simulate(args, cfg):
    params = _game(args, cfg)
    learning = _learning(args, cfg)
    if args.moment_check or cfg.get("moment_check"):
        return _moment_check(args, cfg, params, learning)
    sim = dict(cfg.get("sim", {}))
    for k in ("n_agents", "n_rounds", "record_every"):
        v = getattr(args, k, None)
        if v is not None:
            sim[k] = v
    if args.snapshot_times is not None:
        sim["snapshot_times"] = args.snapshot_times
    if args.initial is not None:
        sim["initial_attractions"] = args.initial
    sim["seed"] = args.seed
    try:
        config = ewa_sim.SimConfig.from_dict(dict(sim, params=params.to_dict(), learning=learning.to_dict()))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    bins = int(_opt(args, cfg, "bins", 100))
    run = Run(args, "simulate")
    run.config = {"params": params.to_dict(), "learning": learning.to_dict(),
                  "sim": {k: v for k, v in config.to_dict().items() if k not in ("params", "learning")},
                  "bins": bins}
    tr = ewa_sim.simulate(config, hist_bins=bins)
    write_csv(run.path("trace.csv"), ["t", "pbar1", "pbar2", "pi1", "pi2", "matched1", "matched2"],
              [(t, p[0], p[1], q[0], q[1], m[0], m[1]) for t, p, q, m in zip(tr.t, tr.pbar, tr.pi, tr.matched)],
              run.meta())
    hrows = []
    for h in tr.snapshots:
        hrows += [(h.edges[k], h.edges[k + 1], h.counts[k], h.cls, h.t) for k in range(len(h.counts))]
    write_csv(run.path("histograms.csv"), ["bin_left", "bin_right", "count", "class", "t"], hrows, run.meta())
    run.finish()


def _moment_check(args, cfg, params, learning):
    n_samples = int(_opt(args, cfg, "samples", 1_000_000))
    n_states = int(_opt(args, cfg, "states", 10))
    run = Run(args, "simulate")
    run.config = {"params": params.to_dict(), "learning": learning.to_dict(), "moment_check": True,
                  "samples": n_samples, "states": n_states}
    rng = np.random.default_rng(args.seed)
    rows, worst = [], 0.0
    for k in range(n_states):
        A = rng.uniform(0.0, 1.0, 2)
        aggr = Aggregates(*rng.uniform(0.05, 0.95, 2))
        c = int(rng.integers(1, 3))
        jm = ewa_sim.frozen_market_jump_moments(A, c, aggr, params, learning, n_samples, seed=args.seed + k)
        mu = fp_analysis.drift(A, aggr, params, learning, c)
        S = fp_analysis.diffusion(A, aggr, params, learning, c)
        zm = (jm.mean - mu) / jm.mean_se
        zs = (jm.second - S) / jm.second_se
        worst = max(worst, float(np.max(np.abs(zm))), float(np.max(np.abs(zs))))
        rows.append((k, c, A[0], A[1], aggr[0], aggr[1], zm[0], zm[1], zs[0, 0], zs[0, 1], zs[1, 1]))
    write_csv(run.path("moment_check.csv"),
              ["state", "class", "A1", "A2", "pbar1", "pbar2", "z_mu1", "z_mu2", "z_s11", "z_s12", "z_s22"],
              rows, run.meta())
    write_json(run.path("moment_check.json"), {"max_abs_z": worst, "pass_4sigma": worst <= 4.0})
    run.finish()


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


# --- parser -------------------------------------------------------------------------

def _game_flags(p):
    g = p.add_argument_group("game")
    g.add_argument("--theta1", type=float, help="bias of market 1 (market 2 gets 1 - theta1)")
    g.add_argument("--pb", type=float, help="buy probability of class 1 (class 2 gets 1 - pb)")
    g.add_argument("--mu-b", dest="mu_b", type=float, help="mean bid price")
    g.add_argument("--mu-a", dest="mu_a", type=float, help="mean ask price")
    g.add_argument("--sigma-b", dest="sigma_b", type=float)
    g.add_argument("--sigma-a", dest="sigma_a", type=float)


def _learning_flags(p):
    g = p.add_argument_group("learning")
    g.add_argument("--r", type=float, help="forgetting rate")
    g.add_argument("--alpha", type=float, help="decay of the unchosen attraction")
    b = g.add_mutually_exclusive_group()
    b.add_argument("--beta", type=float, help="intensity of choice")
    b.add_argument("--beta-inv", dest="beta_inv", type=float, help="1 / intensity of choice")


def _path_flags(p):
    p.add_argument("--n-steps", dest="n_steps", type=int)
    p.add_argument("--t-span", dest="t_span", type=float)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUT_DIR_ENV} or .)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON config or a manifest.json from an earlier run")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")

    ap = argparse.ArgumentParser(prog="marketchoice", description=__doc__.split("\n\n")[0].strip())
    ap.add_argument("--version", action="version", version=_version())
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("nash", parents=[common], help="equilibria and equal-payoff curves")
    _game_flags(p)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.set_defaults(fn=cmd_nash)

    p = sub.add_parser("phase-diagram", parents=[common], help="equilibrium types over (theta1, pb)")
    _game_flags(p)
    p.add_argument("--n-theta", dest="n_theta", type=int)
    p.add_argument("--n-pb", dest="n_pb", type=int)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.set_defaults(fn=cmd_phase_diagram)

    p = sub.add_parser("steady-state", parents=[common], help="weak-noise steady states")
    _game_flags(p)
    _learning_flags(p)
    _path_flags(p)
    p.add_argument("--alphas", type=float, nargs="+", help="sweep these alpha values")
    p.add_argument("--curve-points", dest="curve_points", type=int, help="grid size for the p-tilde curve (0 or 1 skips it)")
    p.set_defaults(fn=cmd_steady_state)

    p = sub.add_parser("critical-alphas", parents=[common], help="alpha thresholds per beta")
    _game_flags(p)
    _path_flags(p)
    p.add_argument("--beta-invs", dest="beta_invs", type=float, nargs="+")
    p.add_argument("--alpha-min", dest="alpha_min", type=float)
    p.add_argument("--alpha-max", dest="alpha_max", type=float)
    p.add_argument("--alpha-grid", dest="alpha_grid", type=int)
    p.set_defaults(fn=cmd_critical_alphas)

    p = sub.add_parser("fixed-points", parents=[common], help="drift fixed points at given aggregates")
    _game_flags(p)
    _learning_flags(p)
    p.add_argument("--pbar1", type=float)
    p.add_argument("--pbar2", type=float)
    p.add_argument("--class", dest="cls", type=int, choices=(1, 2))
    p.set_defaults(fn=cmd_fixed_points)

    p = sub.add_parser("action-path", parents=[common], help="minimal-action paths between stable points")
    _game_flags(p)
    _learning_flags(p)
    _path_flags(p)
    p.add_argument("--pbar1", type=float)
    p.set_defaults(fn=cmd_action_path)

    p = sub.add_parser("simulate", parents=[common], help="agent-based EWA simulation")
    _game_flags(p)
    _learning_flags(p)
    p.add_argument("--n-agents", dest="n_agents", type=int)
    p.add_argument("--n-rounds", dest="n_rounds", type=int)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--snapshot-times", dest="snapshot_times", type=float, nargs="+")
    p.add_argument("--initial", type=float, nargs=2, metavar=("A1", "A2"))
    p.add_argument("--bins", type=int)
    p.add_argument("--moment-check", dest="moment_check", action="store_true",
                   help="compare one-round jump moments with the drift and diffusion instead")
    p.add_argument("--samples", type=int, help="Monte-Carlo samples per state for --moment-check")
    p.add_argument("--states", type=int, help="number of random states for --moment-check")
    p.set_defaults(fn=cmd_simulate)
    return ap


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"status": "error", "kind": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse already printed usage; map its status 2 onto the config-error code
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        cfg = _load_config(args.config)
        if "seed" in cfg and args.seed == 0:
            args.seed = int(cfg["seed"])
        args.fn(args, cfg)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, "config", str(e))
    except ArithmeticError as e:
        return _fail(EXIT_NUMERIC, "numerical", f"{type(e).__name__}: {e}")
    except ValueError as e:
        return _fail(EXIT_NUMERIC, "numerical", f"{type(e).__name__}: {e}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
