"""Command-line front end: ``pldimu {plant,synth,verify,simulate}``.

Exit codes: 0 success (robust / all checks pass), 2 invalid input,
3 synthesis failed, 4 verification failed (including a not-robust verdict).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import plotting
from .config import ConfigError, RunConfig, load_config, preset
from .io import ControllerFileError, read_controller, write_controller, write_csv
from .lti import FrequencyGrid, LTIError, StateSpace, TFMatrix, freq_response, lft_lower
from .mu import DKOptions, MuError, TuneOptions, dk_iterate, mu_upper_curve, tune_fixed_structure
from .riccati import InfeasibleError, RiccatiError
from .robot import (
    IntervalMatrixBounds, PAPER_2R_INTERVALS, TwoLinkParams, augment, build_pldi,
    build_uncertain_plant, jacobian_bounds, kinematic_bounds, make_weights, performance_structure,
    two_link,
)
from .verify import (
    SimulationDiverged, VerificationError, plant_response, check_weight_bounds, monte_carlo_freq,
    simulate_closed_loop, vertex_stability,
)

log = logging.getLogger("pldimu")

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_FAILED = 0, 2, 3, 4


@dataclass
class Problem:
    bounds: IntervalMatrixBounds
    up: object
    W_S: TFMatrix
    W_T: TFMatrix
    P: StateSpace
    ds: object


def robot_model(cfg: RunConfig):
    r = cfg.robot
    return two_link(TwoLinkParams(r.a1, r.a2, r.a3), q_domain=r.q_domain, qd_domain=r.qd_domain,
                    u_domain=r.u_domain, damping=np.asarray(r.damping, float))


def interval_bounds(cfg: RunConfig) -> IntervalMatrixBounds:
    if cfg.intervals.source == "paper":
        return kinematic_bounds(2, PAPER_2R_INTERVALS)
    return jacobian_bounds(robot_model(cfg), density=cfg.intervals.density,
                           margin=cfg.intervals.margin)


def build_problem(cfg: RunConfig) -> Problem:
    bounds = interval_bounds(cfg)
    up = build_uncertain_plant(bounds)
    W_S, W_T = make_weights(cfg.weights.spec())
    P = augment(up, W_S, W_T)
    return Problem(bounds, up, W_S, W_T, P, performance_structure(up))


def _entry_name(mat, i, j):
    return f"{mat.lower()}{i + 1}{j + 1}"


# ---------------------------------------------------------------------------
# commands

def cmd_plant(cfg: RunConfig, out: Path) -> int:
    pb = build_problem(cfg)
    b, digest, seed = pb.bounds, cfg.digest(), cfg.seed
    rows = []
    for mat, i, j in b.uncertain_entries():
        lo, hi = (b.a_lo, b.a_hi) if mat == "A" else (b.b_lo, b.b_hi)
        rows.append([_entry_name(mat, i, j), i + 1, j + 1, lo[i, j], hi[i, j]])
    write_csv(out / "bounds.csv", ["entry", "row", "col", "lo", "hi"], rows, digest, seed)
    pldi = build_pldi(b, mode=cfg.verification.vertex_mode, k=cfg.verification.vertex_samples,
                      seed=seed)
    names = [_entry_name(*e) for e in b.uncertain_entries()]
    write_csv(out / "vertices.csv", ["vertex"] + names,
              [[k] + list(s) for k, s in enumerate(pldi.signs)], digest, seed)
    write_controller(out / "nominal_plant.csv", pb.up.nominal, digest, seed)

    w = cfg.grid.grid().points
    nominal = np.abs(plant_response(pb.up.nominal, w))
    mags = np.array([np.abs(plant_response(StateSpace(A, B, pldi.C, np.zeros((2, 2))), w))
                     for A, B in pldi.vertices])
    lo, hi = mags.min(axis=0), mags.max(axis=0)
    cols, data = ["omega"], [w]
    for tag, arr in (("nom", nominal), ("min", lo), ("max", hi)):
        for i in range(2):
            for j in range(2):
                cols.append(f"{tag}_G{i + 1}{j + 1}")
                data.append(arr[:, i, j])
    write_csv(out / "plant_bode.csv", cols, np.column_stack(data), digest, seed)
    plotting.plot_plant_bode(out / "plant_bode.png", w, nominal, lo, hi)
    write_csv(out / "plant_summary.csv", ["key", "value"],
              [["uncertain_entries", len(names)], ["vertices", len(pldi)],
               ["interval_source", cfg.intervals.source]], digest, seed)
    log.info("plant: %d uncertain entries, %d vertices", len(names), len(pldi))
    return EXIT_OK


def _write_mu_curve(path, curve, digest, seed):
    nb = curve.dscales.shape[1]
    rows = np.column_stack([curve.grid.points, curve.upper, curve.dscales])
    write_csv(path, ["omega", "mu_upper"] + [f"d{k + 1}" for k in range(nb)], rows, digest, seed)


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    pb = build_problem(cfg)
    s, digest, seed = cfg.synthesis, cfg.digest(), cfg.seed
    grid = FrequencyGrid.logspace(cfg.grid.lo, cfg.grid.hi, s.grid_points)
    t0 = time.perf_counter()
    try:
        if s.mode == "unstructured":
            rep = dk_iterate(pb.P, pb.ds, 2, 2, DKOptions(max_iter=s.max_iter, tol=s.tol,
                                                          patience=s.patience, order=s.order,
                                                          grid=grid, gamma_tol=s.gamma_tol,
                                                          seed=seed))
        else:
            init = cfg.controller_tf()
            degrees = [[tuple(d) for d in row] for row in s.degrees]
            if init is not None and [[(len(e.num) - 1, e.order) for e in row]
                                     for row in init.entries] != degrees:
                init = None
            rep = tune_fixed_structure(pb.P, pb.ds, degrees, 2, 2,
                                       TuneOptions(starts=s.starts, seed=seed, grid=grid), init)
    except (InfeasibleError, RiccatiError, MuError) as exc:
        log.error("synthesis failed: %s", exc)
        write_csv(out / "synth_summary.csv", ["key", "value"],
                  [["verdict", "infeasible"], ["error", str(exc)]], digest, seed)
        return EXIT_INFEASIBLE
    elapsed = time.perf_counter() - t0
    write_controller(out / "controller.csv", rep.controller, digest, seed, rep.structured)
    _write_mu_curve(out / "mu_curve.csv", rep.curve, digest, seed)
    acc = set(rep.accepted)
    n_hist = len(rep.mu_history)
    gam = list(rep.gamma_history) + [float("nan")] * (n_hist - len(rep.gamma_history))
    write_csv(out / "iterations.csv", ["iteration", "gamma", "mu_peak", "accepted"],
              [[k + 1, gam[k], rep.mu_history[k], k in acc] for k in range(n_hist)], digest, seed)
    write_csv(out / "synth_summary.csv", ["key", "value"],
              [["verdict", rep.verdict], ["mu_peak", rep.mu_peak],
               ["peak_frequency", rep.curve.peak_frequency], ["iterations", rep.iterations],
               ["controller_order", rep.controller.nstates], ["mode", s.mode],
               ["seconds", elapsed]], digest, seed)
    plotting.plot_mu(out / "mu.png", rep.curve)
    w = cfg.grid.grid().points
    responses = {"synthesized": np.abs(freq_response(rep.controller, w))}
    ref = cfg.controller_tf()
    if ref is not None:
        responses["configured"] = np.abs(freq_response(ref.to_ss(), w))
    plotting.plot_controllers(out / "controller_bode.png", w, responses)
    log.info("synth: verdict %s, mu peak %.4g, order %d", rep.verdict, rep.mu_peak,
             rep.controller.nstates)
    return EXIT_OK if rep.verdict == "robust" else EXIT_FAILED


def _controller(cfg: RunConfig, path) -> tuple[StateSpace, TFMatrix | None]:
    if path is not None:
        return read_controller(path)
    tf = cfg.controller_tf()
    if tf is None:
        raise ControllerFileError("no --controller file given and the config has no controller")
    return tf.to_ss(), tf


def cmd_verify(cfg: RunConfig, out: Path, controller_path=None) -> int:
    k, _ = _controller(cfg, controller_path)
    if k.shape != (2, 2):
        raise ControllerFileError(f"controller must be 2x2, got {k.shape}")
    pb = build_problem(cfg)
    v, digest, seed = cfg.verification, cfg.digest(), cfg.seed
    pldi = build_pldi(pb.bounds, mode=v.vertex_mode, k=v.vertex_samples, seed=seed)
    vr = vertex_stability(k, pldi)
    names = [_entry_name(*e) for e in pb.bounds.uncertain_entries()]
    write_csv(out / "vertex_stability.csv", ["vertex", "abscissa", "stable"] + names,
              [[i, vr.abscissa[i], vr.stable[i]] + list(vr.signs[i]) for i in range(len(pldi))],
              digest, seed)
    summary = [["vertices", len(pldi)], ["vertices_unstable", vr.n_unstable],
               ["worst_abscissa", vr.worst_abscissa]]
    grid = cfg.grid.grid()
    env_ok = False
    try:
        env = monte_carlo_freq(k, pb.up, v.n_monte_carlo, seed, pb.W_S, pb.W_T, grid)
    except VerificationError as exc:
        log.error("envelope: %s", exc)
        summary.append(["envelope", str(exc)])
    else:
        chk = check_weight_bounds(env, v.slack)
        env_ok = chk.passed
        cols, data = ["omega"], [grid.points]
        for tag, arr in (("S", env.s_envelope), ("T", env.t_envelope)):
            for i in range(2):
                for j in range(2):
                    cols.append(f"{tag}{i + 1}{j + 1}")
                    data.append(arr[:, i, j])
        for tag, arr in (("invWS", env.s_template), ("invWT", env.t_template)):
            for i in range(2):
                cols.append(f"{tag}{i + 1}")
                data.append(arr[:, i])
        write_csv(out / "envelope.csv", cols, np.column_stack(data), digest, seed)
        write_csv(out / "mc_samples.csv", ["sample"] + [f"delta_{n}" for n in names],
                  [[i] + list(d) for i, d in enumerate(env.deltas)], digest, seed)
        plotting.plot_envelopes(out / "envelope.png", env)
        summary += [["mc_samples", env.n_samples], ["mc_unstable", len(env.unstable)],
                    ["envelope_worst_ratio", chk.worst_ratio],
                    ["envelope_worst_function", chk.worst_function],
                    ["envelope_worst_channel", chk.worst_channel + 1],
                    ["envelope_worst_frequency", chk.worst_frequency],
                    ["envelope_margin_db", env.margin_db], ["envelope_pass", chk.passed]]
        cl = lft_lower(pb.P, k, 2, 2)
        curve = mu_upper_curve(cl, pb.ds, grid)
        _write_mu_curve(out / "mu_curve.csv", curve, digest, seed)
        plotting.plot_mu(out / "mu.png", curve)
        summary.append(["mu_peak", curve.peak])
    ok = vr.all_stable and env_ok
    summary.append(["pass", ok])
    write_csv(out / "verify_summary.csv", ["key", "value"], summary, digest, seed)
    log.info("verify: %d/%d vertices unstable, envelope %s", vr.n_unstable, len(pldi),
             "pass" if env_ok else "fail")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_simulate(cfg: RunConfig, out: Path, controller_path=None, check_dt=None) -> int:
    k, _ = _controller(cfg, controller_path)
    sim, digest, seed = cfg.simulation, cfg.digest(), cfg.seed
    model = robot_model(cfg)
    check_dt = sim.check_dt if check_dt is None else check_dt
    try:
        tr = simulate_closed_loop(model, k, sim.reference, sim.t_end, sim.dt)
    except SimulationDiverged as exc:
        log.error("simulation: %s", exc)
        write_csv(out / "sim_summary.csv", ["key", "value"], [["diverged", str(exc)]], digest, seed)
        return EXIT_FAILED
    m = model.m
    cols = (["t"] + [f"x{i + 1}" for i in range(model.nx)] + [f"u{i + 1}" for i in range(m)]
            + [f"y{i + 1}" for i in range(m)] + [f"r{i + 1}" for i in range(m)]
            + [f"e{i + 1}" for i in range(m)])
    write_csv(out / "trace.csv", cols,
              np.column_stack([tr.t, tr.x, tr.u, tr.y, tr.r, tr.error]), digest, seed)
    plotting.plot_trace(out / "trace.png", tr)
    r = np.asarray(sim.reference, float)
    scale = np.max(np.abs(r)) if np.any(r) else 1.0
    summary = [["final_error_max", float(np.max(np.abs(tr.error[-1])))],
               ["final_error_relative", float(np.max(np.abs(tr.error[-1])) / scale)],
               ["peak_torque", float(np.max(np.abs(tr.u)))]]
    if check_dt:
        fine = simulate_closed_loop(model, k, sim.reference, sim.t_end, sim.dt / 2)
        z1 = np.concatenate([tr.x[-1], tr.xk[-1]])
        z2 = np.concatenate([fine.x[-1], fine.xk[-1]])
        delta = float(np.linalg.norm(z1 - z2) / max(np.linalg.norm(z2), 1e-300))
        summary.append(["dt_halving_relative_delta", delta])
    write_csv(out / "sim_summary.csv", ["key", "value"], summary, digest, seed)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pldimu", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("plant", "interval bounds, vertices and open-loop Bode data"),
                        ("synth", "mu-synthesis (D-K or fixed structure)"),
                        ("verify", "vertex stability, Monte-Carlo envelopes and mu"),
                        ("simulate", "nonlinear closed-loop step response")):
        p = sub.add_parser(name, help=help_)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="YAML run configuration")
        src.add_argument("--preset", choices=["paper2r"], help="built-in configuration")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        if name in ("verify", "simulate"):
            p.add_argument("--controller", type=Path, help="controller CSV file")
        if name == "simulate":
            p.add_argument("--check-dt", action="store_true", default=None,
                           help="rerun with dt/2 and report the final-state difference")
    return ap


def _resolve_config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.preset is not None:
        cfg = preset(args.preset)
    else:
        cfg = RunConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = str(args.out)
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.yaml").write_text(cfg.dump())
        if args.command == "plant":
            return cmd_plant(cfg, out)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out, args.controller)
        return cmd_simulate(cfg, out, args.controller, args.check_dt)
    except (ConfigError, ControllerFileError, VerificationError, LTIError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
