"""Configuration-driven experiment runner.

Subcommands:

  verify    exactness and property checks -> verify.json (exit 0 iff all pass)
  study     convergence | residual | nonlinear | gradient -> CSV + summary.json
  solve     one direct solver run -> trajectory/ + solver_compare.csv + summary
  compare   solver runs across the eps list -> compare.csv + summary
  report    render SVG figures for every delimited output in a results dir

Global flags: --config <path>, --output <dir>, --seed <u64>, --threads <n>.
Exit codes: 0 success, 1 failed checks, 2 configuration/usage errors.

All artifacts embed the configuration digest; rerunning a command with the
same configuration and seed reproduces every output byte for byte (wall-clock
timing lives only in run_manifest.json).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .geometry import lambda_phi
from .quadrature import time_grid
from .solver import ConfigError as SolverConfigError
from .solver import Grid2D, SolverError, StokesCoriolisSolver, shore_wall_radius
from .verify import (
    check_advection_identity,
    check_boundary,
    check_cutoff_moments,
    check_derivative_growth,
    check_divergence,
    check_frame_identities,
    check_gradient_budget,
    check_weighted_trilinear,
    study_ansatz_convergence,
    study_nonlinear,
    study_residual,
)
from .profiles import INTERIOR_TERMS

FULL_DIGITS = "%.17g"


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\r\n")
        for row in rows:
            fh.write(
                ",".join(
                    FULL_DIGITS % v if isinstance(v, float) else str(v) for v in row
                )
                + "\r\n"
            )


def _manifest(cfg: RunConfig, out_dir, command, wall_clock, results, threads=1):
    payload = {
        "tool": "ekmantopo",
        "version": __version__,
        "command": command,
        "config": cfg.canonical_lines(),
        "config_digest": cfg.digest(),
        "seed": cfg["seed"],
        "threads": threads,
        "wall_clock_s": wall_clock,
        "results": results,
    }
    _write_json(os.path.join(out_dir, "run_manifest.json"), payload)


def _prepare(args):
    overrides = {}
    if args.output:
        overrides["output.dir"] = args.output
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = RunConfig.load(args.config, overrides)
    out_dir = cfg["output.dir"]
    os.makedirs(out_dir, exist_ok=True)
    warn = cfg.amplitude_warning()
    if warn:
        print(warn, file=sys.stderr)
    return cfg, out_dir


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args):
    cfg, out_dir = _prepare(args)
    t0 = time.time()
    seed = cfg["seed"]
    topo = cfg.topography()
    data = cfg.initial_swirl()
    checks = []
    eps_list = cfg["ansatz.epsilons"][:2]
    for eps in eps_list:
        p = cfg.ansatz_params(eps)
        rb = check_boundary(p, cfg["verify.n_boundary_points"], seed)
        rb["eps"] = eps
        rb["name"] = f"boundary_trace_eps{eps:g}"
        checks.append(rb)
        rd = check_divergence(p, cfg["verify.n_divergence_points"], seed)
        rd["eps"] = eps
        rd["name"] = f"divergence_eps{eps:g}"
        checks.append(rd)
    p0 = cfg.ansatz_params(eps_list[0])
    checks.append(check_cutoff_moments(p0))
    checks.append(check_frame_identities(topo, 1000, seed))
    checks.append(check_advection_identity(p0, 100, 1000, seed))
    checks.append(check_derivative_growth(topo, data, cfg["ansatz.a"], seed=seed))
    checks.append(check_weighted_trilinear(p0, 100, seed))
    all_passed = all(c["passed"] for c in checks)
    payload = {
        "all_passed": all_passed,
        "checks": checks,
        "config_digest": cfg.digest(),
        "seed": seed,
    }
    _write_json(os.path.join(out_dir, "verify.json"), payload)
    _manifest(cfg, out_dir, "verify", time.time() - t0,
              {c["name"]: c["passed"] for c in checks}, args.threads)
    for c in checks:
        status = "pass" if c["passed"] else "FAIL"
        print(f"[{status}] {c['name']}: value={c['value']:.3e} "
              f"threshold={c['threshold']:.3e}")
    if not all_passed:
        failing = [c["name"] for c in checks if not c["passed"]]
        print("failed checks: " + ", ".join(failing), file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------

STUDY_GATES = {
    "convergence": {"slope_min": 0.1},
    "convergence_interior": {"slope_min": 0.075},
    "residual": {"slope_min": 0.2, "two_sigma_positive": True},
    "nonlinear": {"two_sigma_positive": True},
}


def cmd_study(args):
    cfg, out_dir = _prepare(args)
    t0 = time.time()
    which = args.which
    eps_list = cfg["ansatz.epsilons"]
    quad_cfg = cfg.quad_options()
    n_t = cfg["study.t_grid"]
    tsf = cfg["quad.t_star_factor"]
    results = {}
    if which == "gradient":
        base = cfg.ansatz_params()
        rep = check_gradient_budget(base, eps_list, cfg["study.n_sample_points"],
                                    cfg["seed"])
        rows = [(e, rep["budgets"][str(e)], 0.0) for e in eps_list]
        _write_csv(os.path.join(out_dir, "study_gradient.csv"),
                   ["epsilon", "value", "stderr"], rows)
        summary = {
            "name": "gradient",
            "pass": rep["passed"],
            "ratio": rep["value"],
            "threshold": rep["threshold"],
            "sup_t0": rep["sup_t0"],
            "sup_t0_growth": rep["sup_t0_growth"],
            "config_digest": cfg.digest(),
        }
        _write_json(os.path.join(out_dir, "summary.json"), summary)
        _manifest(cfg, out_dir, "study gradient", time.time() - t0, summary,
                  args.threads)
        print(f"gradient budget ratio {rep['value']:.3f} "
              f"({'pass' if rep['passed'] else 'FAIL'})")
        return 0 if rep["passed"] else 1

    cfg.require_slope_grid()
    base = cfg.ansatz_params()
    tables = []
    if which == "convergence":
        tables.append(study_ansatz_convergence(base, eps_list, quad_cfg, n_t, tsf))
        tables.append(
            study_ansatz_convergence(base, eps_list, quad_cfg, n_t, tsf,
                                     terms=INTERIOR_TERMS,
                                     name="convergence_interior")
        )
    elif which == "residual":
        tables.append(study_residual(base, eps_list, quad_cfg, max(n_t // 2, 8), tsf))
    elif which == "nonlinear":
        tables.append(study_nonlinear(base, eps_list, quad_cfg, max(n_t // 2, 8), tsf))
    else:
        raise ConfigError(f"unknown study {which!r}")

    main = tables[0]
    rows = [(e, v, 0.0) for e, v in main.rows()]
    _write_csv(os.path.join(out_dir, f"study_{which}.csv"),
               ["epsilon", "value", "stderr"], rows)
    summary = {"config_digest": cfg.digest(), "tables": {}}
    ok = True
    for tb in tables:
        gate = STUDY_GATES.get(tb.name, {})
        passed = True
        if "slope_min" in gate:
            passed = passed and tb.slope >= gate["slope_min"]
        if gate.get("two_sigma_positive"):
            passed = passed and (tb.slope - 2 * tb.slope_stderr > 0)
        ok = ok and passed
        summary["tables"][tb.name] = {
            "slope": tb.slope,
            "slope_stderr": tb.slope_stderr,
            "pass": passed,
            "gate": gate,
            "eps": tb.eps,
            "values": tb.values,
            "metadata": tb.metadata,
        }
        print(f"{tb.name}: slope {tb.slope:.4f} ± {tb.slope_stderr:.4f} "
              f"({'pass' if passed else 'FAIL'})")
    summary["pass"] = ok
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    _manifest(cfg, out_dir, f"study {which}", time.time() - t0,
              summary["tables"], args.threads)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# solver commands
# ---------------------------------------------------------------------------


def _build_solver(cfg: RunConfig, eps: float):
    topo = cfg.topography()
    p = cfg.ansatz_params(eps)
    r_min = shore_wall_radius(topo, eps, cfg["ansatz.a"])
    rout = cfg["solver.rout"]
    if rout <= 0:
        rout = topo.shore.R + cfg["data.center"] + 6.0 * cfg["data.width"]
    grid = Grid2D(topo, r_min, rout, cfg["solver.nr"], cfg["solver.nz"])
    dt = cfg["solver.dt"]
    if dt <= 0:
        dt = min(0.1 * eps, cfg["solver.tmax"] / 200.0)
    return StokesCoriolisSolver(p, grid, dt, nonlinear=cfg["solver.nonlinear"])


def _mid_depth_probe(cfg: RunConfig, sol: StokesCoriolisSolver, eps):
    """Probe radius at mid-depth of the computational column range."""
    topo = sol.params.topo
    g = sol.grid
    phi_wall = float(g.phi_f[0])
    phi_star = 0.5 * (phi_wall + topo.H)
    i = int(np.argmin(np.abs(g.phi_f - phi_star)))
    return g.rho_f[i], i


def _fit_rate(times, vals, lam_ref, window=(0.8, 2.3)):
    times = np.asarray(times)
    vals = np.asarray(vals)
    sel = (times > window[0] / lam_ref) & (times < window[1] / lam_ref)
    if sel.sum() < 4 or np.any(np.abs(vals[sel]) <= 0):
        return float("nan")
    A = np.vstack([times[sel], np.ones(sel.sum())]).T
    coef, *_ = np.linalg.lstsq(A, np.log(np.abs(vals[sel])), rcond=None)
    return float(-coef[0])


def cmd_solve(args):
    cfg, out_dir = _prepare(args)
    t0 = time.time()
    eps = cfg["ansatz.epsilons"][0]
    try:
        sol = _build_solver(cfg, eps)
    except (SolverConfigError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    g = sol.grid
    topo = sol.params.topo
    flatcap = cfg["depth.family"] == "flatcap"
    if flatcap:
        probe_mask = g.rho_f[1 : g.nr] > cfg["geometry.rho0"] + 1.5 * cfg["depth.ell"]
        lam_target = float(np.sqrt(2 * cfg["physics.beta"]) / cfg["depth.H"])
        rate_name = "plateau_decay_rate"
    else:
        rho_star, _ = _mid_depth_probe(cfg, sol, eps)
        probe_mask = np.abs(g.rho_f[1 : g.nr] - rho_star) < 0.5 * cfg["data.width"]
        lam_target = float(
            np.asarray(lambda_phi(np.array([rho_star]), topo))[0]
        )
        rate_name = "mid_depth_decay_rate"
    mid = (g.sig_c > -0.75) & (g.sig_c < -0.25)
    w_probe = sol.V_face[np.ix_(probe_mask, mid)]

    traj_dir = os.path.join(out_dir, "trajectory")
    os.makedirs(traj_dir, exist_ok=True)
    rows = []
    probe_series = {"t": [], "val": []}
    snap_idx = [0]
    n_steps = int(np.ceil(cfg["solver.tmax"] / sol.dt - 1e-12))
    snap_every = max(n_steps // 40, 1)

    def record(st, diss):
        rows.append(
            (
                st.t,
                sol.err_vs_limit(st),
                sol.err_vs_ansatz(st),
                sol.energy(st),
                diss,
            )
        )
        probe_series["t"].append(st.t)
        probe_series["val"].append(
            float(np.sum(w_probe * st.u_th[1 : g.nr][np.ix_(probe_mask, mid)])
                  / np.sum(w_probe))
        )

    st = sol.init_state()
    record(st, 0.0)
    _save_snapshot(traj_dir, snap_idx[0], st, g)
    e_prev = sol.energy(st)
    max_ratio = -np.inf
    try:
        for n in range(1, n_steps + 1):
            st, diss = sol.step(st)
            e = sol.energy(st)
            max_ratio = max(max_ratio, (e + sol.dt * diss - e_prev) / e_prev)
            if e > e_prev * (1 + 1e-6):
                raise SolverError(f"instability detected at step {n}")
            e_prev = e
            if n % snap_every == 0 or n == n_steps:
                record(st, diss)
                snap_idx[0] += 1
                _save_snapshot(traj_dir, snap_idx[0], st, g)
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    _write_csv(
        os.path.join(out_dir, "solver_compare.csv"),
        ["t", "err_vs_limit", "err_vs_ansatz", "energy", "dissipation"],
        rows,
    )
    rate = _fit_rate(probe_series["t"], probe_series["val"], lam_target)
    rate_err = abs(rate - lam_target) / lam_target
    tol = 0.10 if flatcap else 0.15
    summary = {
        rate_name: rate,
        "lambda_target": lam_target,
        "rate_rel_err": rate_err,
        "rate_within_tol": bool(rate_err <= tol),
        "rate_tol": tol,
        "max_energy_step_ratio": max_ratio,
        "energy_inequality_ok": bool(max_ratio <= 1e-8),
        "flat_cap_assumption_violation": topo.flat_cap_assumption_violation,
        "eps": eps,
        "config_digest": cfg.digest(),
    }
    _write_json(os.path.join(out_dir, "solver_summary.json"), summary)
    _manifest(cfg, out_dir, "solve", time.time() - t0, summary, args.threads)
    print(f"{rate_name} = {rate:.4f} vs lambda = {lam_target:.4f} "
          f"({100 * rate_err:.1f}% off, tol {100 * tol:.0f}%); "
          f"energy inequality {'ok' if summary['energy_inequality_ok'] else 'VIOLATED'}")
    return 0 if summary["rate_within_tol"] and summary["energy_inequality_ok"] else 1


def _save_snapshot(traj_dir, idx, st, g):
    name = f"snap_{idx:06d}"
    arrays = [st.u_r, st.u_th, st.u_z, st.p]
    blob = np.concatenate([a.ravel() for a in arrays]).astype("<f8")
    with open(os.path.join(traj_dir, name + ".bin"), "wb") as fh:
        fh.write(blob.tobytes())
    header = {
        "time": st.t,
        "fields": ["u_r", "u_theta", "u_z", "p"],
        "shapes": [list(a.shape) for a in arrays],
        "dtype": "<f8",
        "grid": {
            "r_faces": [float(x) for x in g.r_f],
            "sigma_faces": [float(x) for x in g.sig_f],
        },
    }
    _write_json(os.path.join(traj_dir, name + ".json"), header)


def cmd_compare(args):
    cfg, out_dir = _prepare(args)
    t0 = time.time()
    rows = []
    for eps in cfg["ansatz.epsilons"]:
        try:
            sol = _build_solver(cfg, eps)
        except (SolverConfigError, ConfigError) as exc:
            print(f"configuration error (eps={eps}): {exc}", file=sys.stderr)
            return 2
        st = sol.init_state()
        n_steps = int(np.ceil(cfg["solver.tmax"] / sol.dt - 1e-12))
        sup_lim = 0.0
        sup_app = 0.0
        check_every = max(n_steps // 80, 1)
        for n in range(1, n_steps + 1):
            st, _ = sol.step(st)
            if n % check_every == 0 or n == n_steps:
                sup_lim = max(sup_lim, sol.err_vs_limit(st))
                sup_app = max(sup_app, sol.err_vs_ansatz(st))
        rows.append((eps, sup_lim, sup_app))
        print(f"eps {eps:g}: sup-t err vs limit {sup_lim:.4f}, vs ansatz {sup_app:.4f}")
    _write_csv(os.path.join(out_dir, "compare.csv"),
               ["epsilon", "sup_err_vs_limit", "sup_err_vs_ansatz"], rows)
    errs = [r[1] for r in rows]
    monotone = all(a > b for a, b in zip(errs[:-1], errs[1:]))
    ansatz_better = all(r[2] < r[1] for r in rows)
    summary = {
        "monotone_decreasing": monotone,
        "ansatz_closer_than_limit": ansatz_better,
        "rows": rows,
        "config_digest": cfg.digest(),
        "pass": monotone,
    }
    _write_json(os.path.join(out_dir, "compare_summary.json"), summary)
    _manifest(cfg, out_dir, "compare", time.time() - t0, summary, args.threads)
    return 0 if monotone else 1


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args):
    from . import plots

    results_dir = args.results_dir or (args.output or ".")
    if not os.path.isdir(results_dir):
        print(f"not a directory: {results_dir}", file=sys.stderr)
        return 2
    made = []
    for name in sorted(os.listdir(results_dir)):
        path = os.path.join(results_dir, name)
        if name.startswith("study_") and name.endswith(".csv"):
            eps, vals, _ = _read_csv3(path)
            summary = _try_load(os.path.join(results_dir, "summary.json"))
            slope = stderr = float("nan")
            which = name[len("study_") : -len(".csv")]
            if summary:
                tb = summary.get("tables", {}).get(which) or summary.get("tables", {}).get(
                    "convergence"
                )
                if tb:
                    slope, stderr = tb["slope"], tb["slope_stderr"]
                elif "ratio" in summary:
                    slope, stderr = 0.0, 0.0
            out = os.path.join(results_dir, name.replace(".csv", ".svg"))
            plots.plot_study(
                eps, vals, slope, stderr, out,
                f"{which} study",
                _STUDY_CAPTIONS.get(which, "measured norm against the Rossby number"),
            )
            made.append(out)
        elif name == "solver_compare.csv":
            cols = _read_csv_named(path)
            out = os.path.join(results_dir, "solver_compare.svg")
            plots.plot_timeseries(
                cols["t"],
                {
                    "relative L2 distance to the limit profile": cols["err_vs_limit"],
                    "relative L2 distance to the closed-form approximation":
                        cols["err_vs_ansatz"],
                    "kinetic energy": cols["energy"],
                },
                out,
                "direct solver time series",
                "distance of the computed flow to the damped limit swirl and to "
                "the layer-resolved approximate solution, plus the energy decay",
            )
            made.append(out)
        elif name == "compare.csv":
            cols = _read_csv_named(path)
            out = os.path.join(results_dir, "compare.svg")
            plots.plot_compare(
                cols["epsilon"],
                {
                    "vs limit profile": cols["sup_err_vs_limit"],
                    "vs approximate solution": cols["sup_err_vs_ansatz"],
                },
                out,
                "solver error against the limit, per Rossby number",
                "sup over time of the relative L2 distance between the computed "
                "flow and the damped limit swirl",
            )
            made.append(out)
    if not made:
        print("no plottable results found", file=sys.stderr)
        return 2
    for m in made:
        print(f"wrote {m}")
    return 0


_STUDY_CAPTIONS = {
    "convergence": "sup over time of the L2 distance between the approximate "
                   "solution and the damped limit swirl, per Rossby number",
    "residual": "time-integrated L2 norm of the rotating Stokes defect of the "
                "approximate solution, per Rossby number",
    "nonlinear": "time-integrated L2 distance of the self-advection from its "
                 "geometric limit, per Rossby number",
    "gradient": "time-integrated sup norm of the interior velocity gradient, "
                "per Rossby number",
}


def _read_csv3(path):
    a, b, c = [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            if not line.strip():
                continue
            x, y, z = line.strip().split(",")
            a.append(float(x))
            b.append(float(y))
            c.append(float(z))
    return a, b, c


def _read_csv_named(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = next(fh).strip().split(",")
        cols = {h: [] for h in header}
        for line in fh:
            if not line.strip():
                continue
            for h, tok in zip(header, line.strip().split(",")):
                cols[h].append(float(tok))
    return cols


def _try_load(path):
    if os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    return None


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def make_parser():
    ap = argparse.ArgumentParser(
        prog="ekmantopo",
        description="Ekman layers over shore topography: approximate-solution "
                    "verification and a direct rotating-Stokes solver",
    )
    ap.add_argument("--config", required=False, help="path to the run configuration")
    ap.add_argument("--output", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides seed)")
    ap.add_argument("--threads", type=int, default=1,
                    help="thread budget (recorded; computations are deterministic)")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", help="run the exactness and property checks")
    sp = sub.add_parser("study", help="run a convergence study")
    sp.add_argument("which", choices=["convergence", "residual", "nonlinear",
                                      "gradient"])
    sub.add_parser("solve", help="run the direct solver once")
    sub.add_parser("compare", help="run the solver across the eps list")
    rp = sub.add_parser("report", help="render SVG figures for results")
    rp.add_argument("results_dir", nargs="?", help="directory with results")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    if args.command != "report" and not args.config:
        print("--config is required", file=sys.stderr)
        return 2
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "study":
            return cmd_study(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "report":
            return cmd_report(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
