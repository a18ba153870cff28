"""Command-line front end: ``replab {simulate,equilibrium,classify,cloud,verify}``."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import io
from .analysis import (boundary_gap_bound, classify_limit_behavior, find_divergence_witness, kl_trace,
                       volume_trace)
from .dynamics import IntegratorOptions, evolve_cloud, integrate
from .equilibrium import (find_interior_nash, find_interior_nash_polymatrix, find_max_support_nash,
                          is_nash)
from .errors import DegenerateCloud, InvalidProfile, NotZeroSum, ReplabError
from .game import (SIMPLEX_TOL, Game, StrategyProfile, antisymmetrized, is_zero_sum, self_loop_verdicts,
                   single_loop_matrix, zero_sum_decomposition)
from .geometry import PRUNE_FACTOR, estimate_volume
from .kl import kl_along
from .transform import CumulativeState, divergence_from_profile_flat, x_from_y_flat, y_from_x_flat

DEFAULT_SEED = 0
#: typed-in profiles are renormalized when their sums are off by at most this much
INPUT_SUM_TOL = 1e-6
EXIT_ERROR = 1
EXIT_CHECK_FAILED = 3


class CliError(ReplabError):
    code = "UsageError"


# -- parsing helpers ---------------------------------------------------------------

def parse_profile(text: str, sizes) -> StrategyProfile:
    """``"0.5,0.25,0.25"``; players separated by ``;``; entries may be fractions like ``1/3``."""
    try:
        blocks = [[float(Fraction(v.strip())) for v in part.split(",")] for part in text.split(";")]
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidProfile(f"cannot parse profile {text!r}: {exc}") from exc
    if [len(b) for b in blocks] != list(sizes):
        raise InvalidProfile(f"profile {text!r} has block sizes {[len(b) for b in blocks]}, "
                             f"game expects {list(sizes)}")
    out = []
    for i, b in enumerate(blocks):
        b = np.array(b)
        s = b.sum()
        if np.any(b < 0) or abs(s - 1.0) > INPUT_SUM_TOL:
            raise InvalidProfile(f"player {i}: {b.tolist()} is not a probability vector")
        out.append(b / s)
    return StrategyProfile(out, tol=SIMPLEX_TOL)


def parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _options(args) -> IntegratorOptions:
    kw = {"max_time": args.T}
    if args.tol is not None:
        kw["rel_tol"] = args.tol
    if getattr(args, "abs_tol", None) is not None:
        kw["abs_tol"] = args.abs_tol
    if getattr(args, "record_dt", None) is not None:
        kw["record_dt"] = args.record_dt
    if getattr(args, "coords", None):
        kw["coordinate_system"] = args.coords
    return IntegratorOptions(**kw)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True, default=io._json_default) + "\n")


def _reference_equilibrium(game: Game):
    """An equilibrium to measure KL against: interior when it exists, else maximal support."""
    if game.n_players == 1:
        v = zero_sum_decomposition(single_loop_matrix(game))
        if not v.is_zero_sum:
            return None
        return find_interior_nash(v.antisymmetric_part) or find_max_support_nash(v.antisymmetric_part)
    if not is_zero_sum(antisymmetrized(game)):
        return None
    return find_interior_nash_polymatrix(antisymmetrized(game))


# -- commands ----------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    game = io.load_game(io.resolve_game_path(args.game))
    x0 = parse_profile(args.x0, game.sizes)
    opts = _options(args)
    ref = _reference_equilibrium(game)
    traj = integrate(game, x0, opts, reference=ref.profile if ref is not None else None)
    out = _out_dir(args)
    io.write_trajectory(traj, out / "trajectory.csv")
    side = {"game": game.name, "x0": x0.tolist(), "options": opts.to_dict(),
            "diagnostics": traj.diagnostics.to_dict()}
    io.write_json(out / "diagnostics.json", side)
    _emit({"rows": len(traj), "final": traj.final.tolist(), "kl_drift": traj.diagnostics.kl_drift,
           "files": ["trajectory.csv", "diagnostics.json"]})
    return 0


def cmd_equilibrium(args) -> int:
    game = io.load_game(io.resolve_game_path(args.game))
    if game.n_players == 1:
        v = zero_sum_decomposition(single_loop_matrix(game), args.zs_tol)
        if not v.is_zero_sum:
            raise NotZeroSum(f"self-loop is not zero-sum equivalent (violation {v.max_violation:.3g})")
        b = v.antisymmetric_part
        res = find_interior_nash(b) or find_max_support_nash(b)
        # certificate against the game as given; same flow, same equilibria
        report = res.to_dict()
        report["residuals"] = list(is_nash(game, res.profile).residuals)
        report["zero_sum_equivalent"] = not np.allclose(b, single_loop_matrix(game))
    else:
        res = find_interior_nash_polymatrix(antisymmetrized(game, args.zs_tol), args.zs_tol)
        report = {"found": False, "is_interior": False} if res is None else {"found": True, **res.to_dict()}
    if args.out:
        io.write_json(_out_dir(args) / "equilibrium.json", report)
    _emit(report)
    return 0


def cmd_classify(args) -> int:
    game = io.load_game(io.resolve_game_path(args.game))
    x0 = parse_profile(args.x0, game.sizes)
    verdict = classify_limit_behavior(game, x0, _options(args), eps=args.eps,
                                      rng=np.random.default_rng(args.seed))
    report = verdict.to_dict()
    if args.out:
        io.write_json(_out_dir(args) / "verdict.json", report)
    _emit(report)
    return 0


def disk_cloud(center, radius: float, count: int, seed: int) -> np.ndarray:
    """``count`` points uniform in a disk; point ``k`` uses the ``k``-th child stream of ``seed``."""
    pts = np.empty((count, 2))
    for k, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        u, v = np.random.Generator(np.random.PCG64(child)).random(2)
        r, th = radius * np.sqrt(u), 2 * np.pi * v
        pts[k] = center[0] + r * np.cos(th), center[1] + r * np.sin(th)
    return pts


def cmd_cloud(args) -> int:
    game = io.load_game(io.resolve_game_path(args.game))
    if game.sizes != (3,):
        raise DegenerateCloud(f"cloud volumes and frames need a one-player 3-action game, got sizes {game.sizes}")
    center = parse_floats(args.center) if args.center else None
    ref = _reference_equilibrium(game)
    if center is None:
        center = [0.0, 0.0] if ref is None or not ref.is_interior else \
            y_from_x_flat(game.sizes, ref.profile.flat).tolist()
    if len(center) != 2:
        raise CliError("--center needs two comma-separated numbers")
    pts = disk_cloud(center, args.radius, args.count, args.seed)
    estimate_volume(pts, args.prune_factor)  # reject degenerate clouds before integrating
    times = parse_floats(args.times)
    opts = _options(args).replace(max_time=max(times))
    snaps = evolve_cloud(game, [CumulativeState.from_flat(p, game.sizes) for p in pts], times, opts)
    vt = volume_trace(snaps, args.prune_factor)

    out = _out_dir(args)
    kls = None
    if ref is not None:
        kls = [kl_along(ref.profile.flat, s.states, s.cumulative, game.sizes) for s in snaps]
    rows = []
    for k, s in enumerate(snaps):
        kl = kls[k] if kls is not None else np.full(len(pts), np.nan)
        rows.append(np.column_stack([np.full(len(pts), s.time), np.arange(len(pts)), s.cumulative,
                                     s.states, kl]))
    io.write_table(out / "snapshots.csv", ["t", "point", "y_0_0", "y_0_1", "x_0_0", "x_0_1", "x_0_2", "kl"],
                   np.vstack(rows))
    vol_rows = np.array([[t, v, st.n_triangles, st.n_pruned, st.prune_threshold]
                         for t, v, st in zip(vt.times, vt.volumes, vt.stats)])
    io.write_table(out / "volume.csv", ["t", "volume", "triangles", "pruned", "prune_threshold"], vol_rows)

    allpts = np.vstack([s.cumulative for s in snaps])
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    pad = 0.05 * float(max(hi - lo))
    bounds = (lo[0] - pad, hi[0] + pad, lo[1] - pad, hi[1] + pad)
    frames, band_changes = [], 0
    if kls is not None:
        edges = io.kl_bands(kls[0])
        bands0 = io.band_of(kls[0], edges)
    else:
        bands0 = np.zeros(len(pts), dtype=int)
    for k, s in enumerate(snaps):
        bands = io.band_of(kls[k], edges) if kls is not None else bands0
        band_changes = max(band_changes, int(np.sum(bands != bands0)))
        name = f"frame_{k:02d}_t{s.time:g}.svg"
        io.write_svg(out / name, s.cumulative, bands, bounds, title=f"t = {s.time:g}")
        frames.append(name)
    summary = {
        "seed": args.seed, "center": list(center), "radius": args.radius, "count": args.count,
        "times": list(vt.times), "volumes": list(vt.volumes),
        "max_relative_deviation": vt.max_relative_deviation, "prune_factor": args.prune_factor,
        "points_changing_color_band": band_changes, "options": opts.to_dict(), "frames": frames,
    }
    io.write_json(out / "cloud.json", summary)
    _emit(summary)
    return 0


def _check(name, ok, **detail):
    return {"check": name, "status": "pass" if ok else "fail", **detail}


def cmd_verify(args) -> int:
    game = io.load_game(io.resolve_game_path(args.game))
    rng = np.random.default_rng(args.seed)
    checks = []

    # log-ratio round trips
    xs = np.concatenate([rng.dirichlet(np.ones(n), size=args.samples) for n in game.sizes], axis=1)
    ys = y_from_x_flat(game.sizes, xs)
    err_x = float(np.max(np.abs(x_from_y_flat(game.sizes, ys) - xs)))
    err_y = float(np.max(np.abs(y_from_x_flat(game.sizes, x_from_y_flat(game.sizes, ys)) - ys)))
    checks.append(_check("round_trip", err_x < 1e-12 and err_y < 1e-10, max_error_x=err_x, max_error_y=err_y))

    # divergence of the cumulative field
    loops = {i: v.is_zero_sum for i, v in self_loop_verdicts(game).items()}
    div = np.abs(divergence_from_profile_flat(game, xs))
    k = int(np.argmax(div))
    detail = {"max_abs_divergence": float(div[k]), "self_loops_zero_sum": {str(i): z for i, z in loops.items()}}
    null = float(div[k]) < 1e-9
    if not null:
        wit = find_divergence_witness(game, rng)
        detail["witness"] = {"x": StrategyProfile.from_flat(xs[k], game.sizes, tol=1e-10).tolist(),
                             "divergence": float(divergence_from_profile_flat(game, xs[k]))}
        if wit is not None:
            detail["witness_search"] = {"x": wit[0].tolist(), "divergence": wit[1]}
    checks.append(_check("divergence_nullity", null, **detail))

    # KL conservation or decrease, boundary gap
    ref = _reference_equilibrium(game)
    flow_game = antisymmetrized(game)
    x0 = StrategyProfile.from_flat(
        np.concatenate([rng.dirichlet(np.ones(n)) for n in game.sizes]), game.sizes, tol=1e-10)
    opts = _options(args)
    if ref is None:
        checks.append({"check": "kl", "status": "skipped",
                       "reason": "no zero-sum structure with a usable equilibrium"})
    else:
        traj = integrate(flow_game, x0, opts)
        kt = kl_trace(traj, ref.profile)
        if ref.is_interior:
            checks.append(_check("kl_conservation", kt.drift < args.kl_tol, drift=kt.drift,
                                 tolerance=args.kl_tol, x0=x0.tolist(), reference=ref.profile.tolist()))
            delta = boundary_gap_bound(ref.profile, float(kt.kl_values[0]))
            low = float(traj.states.min())
            checks.append(_check("boundary_gap", low >= delta, min_coordinate=low, bound=delta))
        else:
            steps = np.diff(kt.kl_values)
            worst = float(steps.max())
            checks.append(_check("kl_decrease", worst <= args.kl_tol and kt.kl_values[-1] < kt.kl_values[0],
                                 max_increase=worst, total_decrease=float(kt.kl_values[0] - kt.kl_values[-1]),
                                 x0=x0.tolist(), reference=ref.profile.tolist()))
        res = is_nash(game, ref.profile)
        checks.append(_check("equilibrium_certificate", res.max_residual <= 1e-9, residuals=list(res.residuals)))

    ok = all(c["status"] != "fail" for c in checks)
    report = {"game": game.name, "seed": args.seed, "passed": ok, "checks": checks}
    if args.out:
        io.write_json(_out_dir(args) / "verify.json", report)
    _emit(report)
    return 0 if ok else EXIT_CHECK_FAILED


# -- entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="replab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, T, out_required=False):
        sp.add_argument("--game", required=True, help="game JSON file (or name of a bundled game)")
        sp.add_argument("--out", required=out_required, default=None, help="output directory")
        sp.add_argument("--tol", type=float, default=None, help="relative integration tolerance")
        sp.add_argument("--abs-tol", type=float, default=None)
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        sp.add_argument("--T", type=float, default=T, help="integration horizon")
        sp.add_argument("--record-dt", type=float, default=None)

    sp = sub.add_parser("simulate", help="integrate one orbit")
    common(sp, 100.0, out_required=True)
    sp.add_argument("--x0", required=True, help="e.g. 0.5,0.25,0.25; players separated by ';'")
    sp.add_argument("--coords", choices=["cumulative", "strategy"], default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("equilibrium", help="interior or maximal-support equilibrium")
    common(sp, 0.0)
    sp.add_argument("--zs-tol", type=float, default=1e-9, help="zero-sum tolerance")
    sp.set_defaults(func=cmd_equilibrium)

    sp = sub.add_parser("classify", help="predicted and measured limit behaviour")
    common(sp, 200.0)
    sp.add_argument("--x0", required=True)
    sp.add_argument("--eps", type=float, default=1e-2, help="recurrence radius")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("cloud", help="evolve a disk of initial conditions, measure its area")
    common(sp, 0.0, out_required=True)
    sp.add_argument("--center", default=None, help="disk center in cumulative coordinates (default: equilibrium)")
    sp.add_argument("--radius", type=float, default=0.3)
    sp.add_argument("--count", type=int, default=500)
    sp.add_argument("--times", default="0,112,225")
    sp.add_argument("--prune-factor", type=float, default=PRUNE_FACTOR)
    sp.set_defaults(func=cmd_cloud)

    sp = sub.add_parser("verify", help="run the invariant checks on a game")
    common(sp, 100.0)
    sp.add_argument("--samples", type=int, default=1000)
    sp.add_argument("--kl-tol", type=float, default=1e-6)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ReplabError as exc:
        err = exc.to_dict()
    except (FileNotFoundError, ValueError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
