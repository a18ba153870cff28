"""Invariants and limit behaviour measured on integrated orbits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .dynamics import CloudSnapshot, IntegratorOptions, Trajectory, flow_at, integrate
from .equilibrium import (SUPPORT_THRESHOLD, _solve_support, find_interior_nash,
                          find_interior_nash_polymatrix, find_max_support_nash)
from .errors import NoCrossing, NotZeroSum
from .game import (Game, StrategyProfile, as_profile, is_zero_sum, one_player, payoff_vectors,
                   restrict_to_support, single_loop_matrix, zero_sum_decomposition)
from .geometry import PRUNE_FACTOR, VolumeEstimate, estimate_volume
from .kl import kl_along, kl_sum
from .transform import divergence_from_profile_flat, strategy_field_flat

RECURRENCE_EPS = 1e-2
WARMUP = 1.0
MIN_SEPARATION = 0.5
LIMIT_SUPPORT_THRESHOLD = 1e-6
TAIL_FRACTION = 0.2

__all__ = [
    "KLTrace", "VolumeTrace", "ReturnEvent", "RecurrenceStats", "PeriodEstimate", "LimitVerdict",
    "kl_sum", "kl_time_derivative", "kl_trace", "boundary_gap_bound", "estimate_volume",
    "volume_trace", "recurrence_stats", "detect_period", "support_limit", "project_to_face",
    "time_average", "find_divergence_witness", "classify_limit_behavior",
]


# -- KL ----------------------------------------------------------------------------

@dataclass
class KLTrace:
    times: np.ndarray
    kl_values: np.ndarray
    analytic_derivative: np.ndarray
    drift: float


def kl_time_derivative(game: Game, x_star, x) -> float:
    """Closed-form ``d/dt sum_i KL(x*_i || x_i)`` along the replicator flow at ``x``.

    Equals ``sum_i u_i(x) - sum_i sum_a x*_{i,a} u_{i,a}(x)``.
    """
    x_star = as_profile(x_star, game.sizes)
    return float(_kl_rate_flat(game, x_star.flat, as_profile(x, game.sizes).flat))


def _kl_rate_flat(game: Game, x_star: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = payoff_vectors(game, x)
    return (x * u).sum(axis=-1) - (x_star * u).sum(axis=-1)


def kl_trace(traj: Trajectory, x_star) -> KLTrace:
    ref = as_profile(x_star, traj.game.sizes).flat
    kl = kl_along(ref, traj.states, traj.cumulative, traj.game.sizes)
    rate = _kl_rate_flat(traj.game, ref, traj.states)
    return KLTrace(traj.times, kl, rate, float(np.max(np.abs(kl - kl[0]))))


def boundary_gap_bound(x_star, level: float) -> float:
    """Lower bound on every coordinate of an orbit whose KL level from interior ``x*`` is ``level``.

    ``min_{i,a} exp(-(level + H(x*_i)) / x*_{i,a})`` with ``H`` the Shannon
    entropy in nats.
    """
    x_star = as_profile(x_star, None if not isinstance(x_star, StrategyProfile) else x_star.sizes)
    best = np.inf
    for b in x_star:
        if np.any(b <= 0):
            raise ValueError("boundary gap bound needs an interior reference profile")
        h = -float(np.sum(b * np.log(b)))
        best = min(best, float(np.min(np.exp(-(level + h) / b))))
    return best


# -- volume ----------------------------------------------------------------------------

@dataclass
class VolumeTrace:
    times: np.ndarray
    volumes: np.ndarray
    stats: list[VolumeEstimate]

    @property
    def max_relative_deviation(self) -> float:
        return float(np.max(np.abs(self.volumes / self.volumes[0] - 1.0)))


def volume_trace(snapshots: Sequence[CloudSnapshot], prune_factor: float = PRUNE_FACTOR) -> VolumeTrace:
    stats = []
    for snap in snapshots:
        if snap.cumulative is None:
            raise ValueError("volume estimation needs cumulative coordinates")
        stats.append(estimate_volume(snap.cumulative, prune_factor))
    return VolumeTrace(np.array([s.time for s in snapshots]), np.array([s.area for s in stats]), stats)


# -- recurrence ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ReturnEvent:
    time: float
    distance: float


@dataclass
class RecurrenceStats:
    events: list[ReturnEvent]
    stationary: bool = False

    def __len__(self):
        return len(self.events)


def _max_dist(states: np.ndarray, x0: np.ndarray) -> np.ndarray:
    return np.max(np.abs(states - x0), axis=-1)


def recurrence_stats(traj: Trajectory, x0=None, eps: float = RECURRENCE_EPS, warmup: float = WARMUP,
                     min_separation: float = MIN_SEPARATION) -> RecurrenceStats:
    """Times after ``warmup`` where the orbit comes back within ``eps`` of ``x0`` (max norm).

    Only local minima of the distance count, and events closer than
    ``min_separation`` are merged into the closest one.
    """
    x0 = traj.states[0] if x0 is None else as_profile(x0, traj.game.sizes).flat
    d = _max_dist(traj.states, x0)
    if np.max(d) < 1e-12:
        return RecurrenceStats([], stationary=True)
    t = traj.times - traj.times[0]
    events: list[ReturnEvent] = []
    for k in range(1, len(d) - 1):
        if t[k] <= warmup or d[k] >= eps or d[k] > d[k - 1] or d[k] > d[k + 1]:
            continue
        ev = ReturnEvent(float(traj.times[k]), float(d[k]))
        if events and ev.time - events[-1].time < min_separation:
            if ev.distance < events[-1].distance:
                events[-1] = ev
            continue
        events.append(ev)
    return RecurrenceStats(events)


# -- periodicity ----------------------------------------------------------------------------

@dataclass
class PeriodEstimate:
    period: float | None
    return_error: float | None
    crossings: int
    stationary: bool = False
    candidate: float | None = None


def _section_crossings(traj: Trajectory, normal: np.ndarray, origin: np.ndarray):
    g = (traj.states - origin) @ normal
    ks = np.flatnonzero((g[:-1] < 0) & (g[1:] >= 0))
    return g, ks


def detect_period(traj: Trajectory, tol: float = 1e-6, max_candidates: int = 3) -> PeriodEstimate:
    """First-return period of the orbit to the section through its first sample.

    The section is the hyperplane through ``x(t0)`` normal to the replicator
    velocity there; only crossings in the direction of the flow count. Each
    bracketing pair of samples is refined by root-finding on short
    re-integrations, and the return error is measured by integrating one full
    period from the start. ``period`` is ``None`` when the best return error is
    not below ``tol``.
    """
    game = traj.game
    p = traj.states[0]
    v = strategy_field_flat(game, p)
    if np.max(np.abs(v)) < 1e-14:
        return PeriodEstimate(None, None, 0, stationary=True)
    g, ks = _section_crossings(traj, v, p)
    if ks.size == 0:
        raise NoCrossing(f"orbit never re-crosses the section within {traj.times[-1] - traj.times[0]:.6g} time units")
    opts = traj.options
    t0 = traj.times[0]
    best = PeriodEstimate(None, np.inf, int(ks.size))
    for k in ks[:max_candidates]:
        start = traj.start_state(int(k))

        def h(tau, start=start, k=k):
            dt = tau - (traj.times[k] - t0)
            x = flow_at(game, start, dt, opts) if dt > 0 else as_profile(traj.states[k], game.sizes, tol=1e-9)
            return float((x.flat - p) @ v)

        a, b = traj.times[k] - t0, traj.times[k + 1] - t0
        ha, hb = h(a), h(b)
        if ha == 0:
            period = a
        elif hb == 0 or ha * hb > 0:
            # dense-output noise moved the sign; fall back to the sampled bracket
            period = a + (b - a) * (-g[k]) / (g[k + 1] - g[k])
        else:
            period = brentq(h, a, b, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=100)
        back = flow_at(game, traj.start_state(0), period, opts)
        err = float(np.max(np.abs(back.flat - p)))
        if err < best.return_error:
            best = PeriodEstimate(period, err, int(ks.size), candidate=period)
        if err < tol:
            break
    if best.return_error >= tol:
        best.period = None
    return best


def time_average(game: Game, x0, period: float, opts: IntegratorOptions | None = None,
                 samples: int = 4000) -> np.ndarray:
    """``(1/T) * integral_0^T x(t) dt`` by Simpson's rule on a fine recording grid."""
    opts = (opts or IntegratorOptions()).replace(max_time=period, record_dt=period / samples)
    traj = integrate(game, x0, opts)
    return simpson(traj.states, x=traj.times, axis=0) / (traj.times[-1] - traj.times[0])


def project_to_face(traj: Trajectory, support: Sequence[int]) -> Trajectory:
    """Re-express a one-player trajectory on the face spanned by ``support``.

    The result is a trajectory of the restricted game, with the off-support
    mass dropped and the remaining coordinates renormalized.
    """
    idx = np.asarray(sorted(support), dtype=int)
    face = restrict_to_support(traj.game, idx)
    states = traj.states[:, idx]
    states = states / states.sum(axis=1, keepdims=True)
    cum = None
    if traj.cumulative is not None:
        # log-ratios to the first kept action, exact even if dropped mass underflowed
        y = np.concatenate([np.zeros((len(traj), 1)), traj.cumulative], axis=1)
        cum = y[:, idx[1:]] - y[:, idx[:1]]
    return Trajectory(face, traj.times, states, cum, traj.options, traj.diagnostics)


# -- support of the limit -------------------------------------------------------------------

def support_limit(traj: Trajectory, threshold: float = LIMIT_SUPPORT_THRESHOLD,
                  tail_fraction: float = TAIL_FRACTION) -> tuple[tuple[int, ...], ...]:
    """Actions whose share exceeds ``threshold`` at least once in the tail of the orbit."""
    tail = traj.tail(tail_fraction)
    peak = tail.states.max(axis=0)
    return tuple(tuple(int(a) for a in np.flatnonzero(peak[traj.game.slice(i)] > threshold))
                 for i in range(traj.game.n_players))


def maximal_supports(matrix, threshold: float = SUPPORT_THRESHOLD) -> list[tuple[int, ...]]:
    """All equilibrium supports of the largest size for an antisymmetric matrix."""
    from .game import supports_by_size
    a = np.asarray(matrix, dtype=float)
    found, size = [], None
    for s in supports_by_size(a.shape[0]):
        if size is not None and len(s) < size:
            break
        if _solve_support(a, s, threshold, 1e-9) is not None:
            size = len(s)
            found.append(s)
    return found


# -- divergence witnesses -------------------------------------------------------------------

def find_divergence_witness(game: Game, rng: np.random.Generator, draws: int = 1000,
                            threshold: float = 1e-6):
    """Random interior point where the cumulative-space divergence exceeds ``threshold``.

    Returns ``(profile, divergence)`` for the largest value found, or ``None``.
    """
    xs = np.concatenate([rng.dirichlet(np.ones(n), size=draws) for n in game.sizes], axis=1)
    div = divergence_from_profile_flat(game, xs)
    k = int(np.argmax(np.abs(div)))
    if abs(div[k]) <= threshold:
        return None
    return StrategyProfile.from_flat(xs[k], game.sizes, tol=1e-10), float(div[k])


# -- classification -------------------------------------------------------------------------

RECURRENT = "recurrent"
BOUNDARY_COLLAPSE = "boundary_collapse"
PERIODIC = "periodic"
UNDETERMINED = "undetermined"


@dataclass
class LimitVerdict:
    kind: str
    predicted: str
    recurrence_returns: list[tuple[float, float]] = field(default_factory=list)
    estimated_period: float | None = None
    limit_support: tuple[tuple[int, ...], ...] = ()
    evidence: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    @property
    def agrees(self) -> bool:
        return self.kind == self.predicted

    def to_dict(self):
        return {
            "prediction": self.predicted,
            "measurement": self.kind,
            "agrees": self.agrees,
            "recurrence_returns": [list(r) for r in self.recurrence_returns],
            "estimated_period": self.estimated_period,
            "limit_support": [list(s) for s in self.limit_support],
            "evidence": self.evidence,
            "thresholds": self.thresholds,
        }


def classify_limit_behavior(game: Game, x0, opts: IntegratorOptions | None = None, *,
                            eps: float = RECURRENCE_EPS, warmup: float = WARMUP,
                            period_tol: float = 1e-6, support_threshold: float = LIMIT_SUPPORT_THRESHOLD,
                            tail_fraction: float = TAIL_FRACTION,
                            rng: np.random.Generator | None = None) -> LimitVerdict:
    """Predict the limit behaviour from equilibrium structure, then measure it on the orbit.

    One-player games: not zero-sum equivalent gives ``undetermined``; an
    interior equilibrium predicts recurrence (periodicity with three actions);
    otherwise the orbit should collapse onto the face of a maximal-support
    equilibrium. Multi-player games are predicted recurrent when zero-sum with
    an interior equilibrium and ``undetermined`` otherwise.
    """
    opts = opts or IntegratorOptions(max_time=200.0)
    x0 = as_profile(x0, game.sizes)
    thresholds = {"eps": eps, "warmup": warmup, "min_separation": MIN_SEPARATION,
                  "period_tol": period_tol, "support_threshold": support_threshold,
                  "tail_fraction": tail_fraction, "horizon": opts.max_time,
                  "rel_tol": opts.rel_tol, "abs_tol": opts.abs_tol}
    if game.n_players == 1:
        return _classify_one_player(game, x0, opts, thresholds, rng)
    return _classify_polymatrix(game, x0, opts, thresholds)


def _measure_recurrence(game, x0, opts, thresholds, ev):
    traj = integrate(game, x0, opts)
    rec = recurrence_stats(traj, eps=thresholds["eps"], warmup=thresholds["warmup"])
    ev["stationary"] = rec.stationary
    return traj, rec


def _classify_one_player(game, x0, opts, thresholds, rng) -> LimitVerdict:
    a = single_loop_matrix(game)
    zs = zero_sum_decomposition(a)
    ev: dict = {"is_zero_sum": zs.is_zero_sum, "zero_sum_violation": zs.max_violation}
    if not zs.is_zero_sum:
        rng = rng or np.random.default_rng(0)
        wit = find_divergence_witness(game, rng)
        ev["divergence_witness"] = None if wit is None else {"x": wit[0].tolist(), "divergence": wit[1]}
        return LimitVerdict(UNDETERMINED, UNDETERMINED, evidence=ev, thresholds=thresholds)
    b = zs.antisymmetric_part
    ev["column_constants"] = zs.column_constant_part.tolist()
    flow_game = one_player(b, name=game.name)
    n = a.shape[0]
    eq = find_interior_nash(b)
    if eq is not None:
        predicted = PERIODIC if n == 3 else RECURRENT
        ev["equilibrium"] = eq.to_dict()
        traj, rec = _measure_recurrence(flow_game, x0, opts, thresholds, ev)
        full = tuple(tuple(range(k)) for k in game.sizes)
        verdict = LimitVerdict(UNDETERMINED, predicted, [(e.time, e.distance) for e in rec.events],
                               limit_support=full, evidence=ev, thresholds=thresholds)
        ev["kl_drift"] = kl_trace(traj, eq.profile).drift
        if rec.stationary:
            verdict.kind = predicted
            ev["note"] = "initial condition is a rest point"
            return verdict
        if n == 3:
            try:
                per = detect_period(traj, thresholds["period_tol"])
                ev["return_error"] = per.return_error
                if per.period is not None:
                    verdict.estimated_period = per.period
            except NoCrossing:
                ev["return_error"] = None
        if verdict.estimated_period is not None:
            verdict.kind = PERIODIC
        elif rec.events:
            verdict.kind = RECURRENT
        return verdict

    mx = find_max_support_nash(b)
    ev["equilibrium"] = mx.to_dict()
    union = sorted(set().union(*maximal_supports(b)))
    ev["maximal_support_union"] = union
    if not x0.is_interior():
        ev["note"] = "initial condition is on the boundary; the collapse theorem covers interior orbits"
    traj = integrate(flow_game, x0, opts)
    limit = support_limit(traj, thresholds["support_threshold"], thresholds["tail_fraction"])
    tail = traj.tail(thresholds["tail_fraction"])
    ev["tail_distance_to_equilibrium"] = float(np.max(np.abs(tail.states - mx.profile.flat)))
    ev["kl_decrease"] = float(kl_trace(traj, mx.profile).kl_values[0]
                              - kl_trace(traj, mx.profile).kl_values[-1])
    verdict = LimitVerdict(UNDETERMINED, BOUNDARY_COLLAPSE, limit_support=limit, evidence=ev,
                           thresholds=thresholds)
    collapsed = len(limit[0]) < n and set(limit[0]) <= set(union)
    if collapsed:
        verdict.kind = BOUNDARY_COLLAPSE
        ev["converges_to_equilibrium"] = ev["tail_distance_to_equilibrium"] < 1e-3
        if not ev["converges_to_equilibrium"] and len(limit[0]) == 3:
            face = project_to_face(tail, limit[0])
            try:
                per = detect_period(face, 1e-4)
                verdict.estimated_period = per.period
                ev["boundary_return_error"] = per.return_error
            except NoCrossing:
                pass
    return verdict


def _classify_polymatrix(game, x0, opts, thresholds) -> LimitVerdict:
    ev: dict = {"is_zero_sum": is_zero_sum(game)}
    if not ev["is_zero_sum"]:
        traj = integrate(game, x0, opts)
        limit = support_limit(traj, thresholds["support_threshold"], thresholds["tail_fraction"])
        return LimitVerdict(UNDETERMINED, UNDETERMINED, limit_support=limit, evidence=ev,
                            thresholds=thresholds)
    try:
        eq = find_interior_nash_polymatrix(game)
    except NotZeroSum:
        eq = None
    if eq is None:
        traj = integrate(game, x0, opts)
        limit = support_limit(traj, thresholds["support_threshold"], thresholds["tail_fraction"])
        ev["interior_equilibrium"] = None
        return LimitVerdict(UNDETERMINED, UNDETERMINED, limit_support=limit, evidence=ev,
                            thresholds=thresholds)
    ev["equilibrium"] = eq.to_dict()
    traj, rec = _measure_recurrence(game, x0, opts, thresholds, ev)
    ev["kl_drift"] = kl_trace(traj, eq.profile).drift
    full = tuple(tuple(range(k)) for k in game.sizes)
    kind = RECURRENT if rec.events or rec.stationary else UNDETERMINED
    return LimitVerdict(kind, RECURRENT, [(e.time, e.distance) for e in rec.events],
                        limit_support=full, evidence=ev, thresholds=thresholds)
