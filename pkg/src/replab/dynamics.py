"""Numerical integration of replicator dynamics.

Orbits are integrated with an adaptive Dormand-Prince 5(4) pair. By default
the state lives in cumulative-payoff coordinates, where the simplex constraint
holds by construction and the field stays bounded even as some strategies
vanish. Integration directly on the simplex is kept for orbits that run into
the boundary; there each accepted step is clipped at zero and renormalized.

Point clouds are integrated in lockstep as one batched system: every point
sees the same step sequence, and the step is accepted only when the worst
point's local error is within tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import BoundaryPoint, InvalidProfile, StepSizeUnderflow
from .game import Game, StrategyProfile, as_profile
from .kl import kl_along
from .transform import (CumulativeState, cumulative_field_flat, strategy_field_flat, x_from_y_flat,
                        y_from_x_flat)

log = logging.getLogger(__name__)

CUMULATIVE = "cumulative"
STRATEGY = "strategy"

# Dormand-Prince 5(4) tableau with the dense-output polynomial of Shampine (1986)
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
# negative mass beyond this in strategy coordinates is an integration failure, not rounding
_CLIP_LIMIT = 1e-6


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-11
    max_step: float = 0.1
    record_dt: float = 0.05
    coordinate_system: str = CUMULATIVE
    max_time: float = 10.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.record_dt > 0:
            raise ValueError("record_dt must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.coordinate_system not in (CUMULATIVE, STRATEGY):
            raise ValueError(f"unknown coordinate system {self.coordinate_system!r}")
        if not np.isfinite(self.max_time):
            raise ValueError("max_time must be finite")

    def replace(self, **changes) -> IntegratorOptions:
        return replace(self, **changes)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class Diagnostics:
    step_sizes: np.ndarray
    error_norms: np.ndarray
    n_rejected: int
    n_fev: int
    clip_events: list[tuple[float, float]] = field(default_factory=list)
    kl_reference: list[list[float]] | None = None
    kl_drift: float | None = None

    @property
    def n_steps(self) -> int:
        return int(self.step_sizes.size)

    @property
    def max_clip(self) -> float:
        return max((m for _, m in self.clip_events), default=0.0)

    def to_dict(self):
        h = self.step_sizes
        return {
            "n_steps": self.n_steps,
            "n_rejected": self.n_rejected,
            "n_fev": self.n_fev,
            "step_min": float(h.min()) if h.size else None,
            "step_max": float(h.max()) if h.size else None,
            "step_mean": float(h.mean()) if h.size else None,
            "max_error_norm": float(self.error_norms.max()) if self.error_norms.size else None,
            "kl_reference": self.kl_reference,
            "kl_drift": self.kl_drift,
            "clip_events": len(self.clip_events),
            "max_clip": self.max_clip,
        }


@dataclass
class Trajectory:
    """Samples of one orbit at the recording grid."""

    game: Game
    times: np.ndarray
    states: np.ndarray
    cumulative: np.ndarray | None
    options: IntegratorOptions
    diagnostics: Diagnostics

    def __len__(self):
        return self.times.size

    def profile(self, k: int) -> StrategyProfile:
        return StrategyProfile.from_flat(self.states[k], self.game.sizes, tol=1e-10)

    @property
    def initial(self) -> StrategyProfile:
        return self.profile(0)

    @property
    def final(self) -> StrategyProfile:
        return self.profile(-1)

    def cumulative_state(self, k: int) -> CumulativeState | None:
        if self.cumulative is None:
            return None
        return CumulativeState.from_flat(self.cumulative[k], self.game.sizes)

    def start_state(self, k: int = 0):
        """Best available restart point for sample ``k`` (cumulative when present)."""
        c = self.cumulative_state(k)
        return c if c is not None else self.profile(k)

    def tail(self, fraction: float) -> Trajectory:
        """The last ``fraction`` of samples, with times kept absolute."""
        k0 = min(len(self) - 1, int(np.floor(len(self) * (1 - fraction))))
        return self.window(k0)

    def window(self, k0: int, k1: int | None = None) -> Trajectory:
        sl = slice(k0, k1)
        cum = None if self.cumulative is None else self.cumulative[sl]
        return Trajectory(self.game, self.times[sl], self.states[sl], cum, self.options, self.diagnostics)


@dataclass
class CloudSnapshot:
    time: float
    states: np.ndarray
    cumulative: np.ndarray | None


# -- core stepper ------------------------------------------------------------------

def _rms_rows(a: np.ndarray) -> np.ndarray:
    """RMS over the last axis; scalar for 1-D input, one value per point otherwise."""
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-1])
    return np.sqrt(np.mean(a * a, axis=-1))


def _initial_step(fun, y0, f0, rtol, atol, max_step):
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(_rms_rows(y0 / scale))
    d1 = np.max(_rms_rows(f0 / scale))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    f1 = fun(y0 + h0 * f0)
    d2 = np.max(_rms_rows((f1 - f0) / scale)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, max_step)


def _record_grid(t_end: float, dt: float) -> np.ndarray:
    n = int(np.floor(t_end / dt + 1e-9))
    grid = np.arange(n + 1) * dt
    if t_end - grid[-1] > 1e-9 * max(1.0, t_end):
        grid = np.append(grid, t_end)
    # k * dt can land a rounding error past t_end
    grid[-1] = min(grid[-1], t_end)
    return grid


def dopri(fun: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, t_end: float,
          record_times: np.ndarray, rtol: float, atol: float, max_step: float,
          post_step: Callable[[float, np.ndarray], np.ndarray] | None = None):
    """Integrate ``y' = fun(y)`` from ``t = 0`` to ``t_end``.

    ``y0`` may carry leading batch axes; the step is shared across the batch.
    Returns ``(samples, diagnostics)`` with ``samples[k]`` the state at
    ``record_times[k]`` (dense output between accepted steps).
    """
    y = np.array(y0, dtype=float)
    record_times = np.asarray(record_times, dtype=float)
    samples = np.empty((record_times.size,) + y.shape)
    nfev = 0

    def f(z):
        nonlocal nfev
        nfev += 1
        return fun(z)

    ri = 0
    while ri < record_times.size and record_times[ri] <= 0.0:
        samples[ri] = y
        ri += 1
    steps, errs, clips = [], [], []
    n_rejected = 0
    t = 0.0
    if t_end <= 0:
        if ri < record_times.size:
            raise ValueError(f"record time {record_times[ri]!r} lies beyond t_end={t_end!r}")
        return samples, Diagnostics(np.zeros(0), np.zeros(0), 0, nfev)
    fy = f(y)
    h = _initial_step(f, y, fy, rtol, atol, max_step)
    shape = y.shape
    m = y.size
    # stages stored flat, so every combination is one small matrix product
    K = np.empty((7, m))
    last_err = np.zeros(shape[:-1])
    powers = np.arange(1, 5)
    while t < t_end:
        min_step = 10 * np.finfo(float).eps * max(1.0, abs(t))
        rejected = False
        yf = y.reshape(m)
        while True:
            if h < min_step:
                raise StepSizeUnderflow(f"step size {h:.3g} underflowed at t={t:.6g}", t=t,
                                        point_index=int(np.argmax(last_err)) if len(shape) > 1 else None)
            h = min(h, max_step)
            t_new = t + h
            if t_new >= t_end or t_end - t_new < min_step:
                t_new = t_end
            hh = t_new - t
            K[0] = fy.reshape(m)
            for s in range(1, 6):
                K[s] = f((yf + hh * (_A[s] @ K[:s])).reshape(shape)).reshape(m)
            y_new = (yf + hh * (_B @ K[:6])).reshape(shape)
            f_new = f(y_new)
            K[6] = f_new.reshape(m)
            err = (hh * (_E @ K)).reshape(shape)
            scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
            last_err = _rms_rows(err / scale)
            err_norm = float(np.max(last_err))
            if err_norm <= 1.0:
                factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
                if rejected:
                    factor = min(1.0, factor)
                break
            n_rejected += 1
            rejected = True
            h = hh * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
        # dense output for grid points inside (t, t_new]
        if ri < record_times.size and record_times[ri] <= t_new:
            Q = K.T @ _P
            while ri < record_times.size and record_times[ri] <= t_new:
                tr = record_times[ri]
                if tr >= t_new:
                    samples[ri] = y_new
                else:
                    theta = (tr - t) / hh
                    samples[ri] = (yf + hh * (Q @ theta ** powers)).reshape(shape)
                ri += 1
        if post_step is not None:
            y_post, clip = post_step(t_new, y_new)
            if clip:
                clips.append((t_new, clip))
            if y_post is not y_new:
                y_new = y_post
                f_new = f(y_new)
        steps.append(hh)
        errs.append(err_norm)
        t, y, fy = t_new, y_new, f_new
        h = hh * factor
    if ri < record_times.size:
        raise ValueError(f"record time {record_times[ri]!r} lies beyond t_end={t_end!r}")
    diag = Diagnostics(np.array(steps), np.array(errs), n_rejected, nfev, clip_events=clips)
    return samples, diag


# -- coordinate plumbing -----------------------------------------------------------

def _renormalize(game: Game, x: np.ndarray):
    """Clip at zero and renormalize each player's block; returns (x, clipped mass)."""
    neg = np.minimum(x, 0.0)
    worst = float(-neg.min()) if neg.size else 0.0
    if worst > _CLIP_LIMIT:
        raise BoundaryPoint(f"strategy-space integration produced a coordinate of {-worst:.3g}")
    x = np.maximum(x, 0.0)
    sums = np.add.reduceat(x, list(game.offsets[:-1]), axis=-1)
    x = x / np.repeat(sums, game.sizes, axis=-1)
    return x, worst


def _initial_state(game: Game, x0, opts: IntegratorOptions):
    """Start vector in integration coordinates (batch-aware for clouds)."""
    if isinstance(x0, CumulativeState):
        if opts.coordinate_system != CUMULATIVE:
            x = x_from_y_flat(game.sizes, x0.flat)
            return x
        if x0.sizes != game.sizes:
            raise InvalidProfile(f"cumulative state sizes {x0.sizes} do not match game {game.sizes}")
        return x0.flat.copy()
    prof = as_profile(x0, game.sizes)
    flat = prof.flat
    if opts.coordinate_system == CUMULATIVE:
        if not np.all(flat > 0):
            raise BoundaryPoint("cumulative-coordinate integration needs a strictly interior start; "
                                "use coordinate_system='strategy' for boundary points")
        return y_from_x_flat(game.sizes, flat)
    return flat.copy()


def _run(game: Game, z0: np.ndarray, t_end: float, record: np.ndarray, opts: IntegratorOptions,
         backward: bool = False):
    sign = -1.0 if backward else 1.0
    if opts.coordinate_system == CUMULATIVE:
        def fun(z):
            return sign * cumulative_field_flat(game, z)
        post = None
    else:
        def fun(z):
            return sign * strategy_field_flat(game, z)

        def post(t, z):
            zz, worst = _renormalize(game, z)
            return zz, worst
    samples, diag = dopri(fun, z0, t_end, record, opts.rel_tol, opts.abs_tol, opts.max_step, post)
    if opts.coordinate_system == CUMULATIVE:
        return x_from_y_flat(game.sizes, samples), samples, diag
    states = samples
    if states.size:
        states, _ = _renormalize(game, states)
    return states, None, diag


# -- public operations ---------------------------------------------------------------

def integrate(game: Game, x0, opts: IntegratorOptions | None = None, *,
              reference=None) -> Trajectory:
    """Integrate one orbit from ``x0`` for ``opts.max_time`` time units.

    ``x0`` is a strategy profile or a :class:`CumulativeState`. When
    ``reference`` (an equilibrium profile) is given, the KL divergence from it
    is tracked and its maximal drift stored in the diagnostics.
    """
    opts = opts or IntegratorOptions()
    if opts.max_time < 0:
        raise ValueError("integrate runs forward in time; use flow_at for negative times")
    z0 = _initial_state(game, x0, opts)
    record = _record_grid(opts.max_time, opts.record_dt)
    states, cum, diag = _run(game, z0, opts.max_time, record, opts)
    traj = Trajectory(game, record, states, cum, opts, diag)
    if diag.clip_events:
        log.warning("strategy-space integration clipped %d steps (max %.3g)",
                    len(diag.clip_events), diag.max_clip)
    if reference is not None:
        ref = as_profile(reference, game.sizes)
        kl = kl_along(ref.flat, states, cum, game.sizes)
        diag.kl_reference = ref.tolist()
        diag.kl_drift = float(np.max(np.abs(kl - kl[0])))
    return traj


def flow_at(game: Game, x0, t: float, opts: IntegratorOptions | None = None,
            cumulative: bool = False):
    """State of the flow at time ``t`` (negative ``t`` integrates backwards).

    Returns a :class:`StrategyProfile`, or the :class:`CumulativeState` when
    ``cumulative`` is set and the integration runs in cumulative coordinates.
    """
    opts = opts or IntegratorOptions()
    z0 = _initial_state(game, x0, opts)
    if t == 0:
        if isinstance(x0, CumulativeState) and cumulative:
            return x0
        if isinstance(x0, CumulativeState):
            return StrategyProfile.from_flat(x_from_y_flat(game.sizes, x0.flat), game.sizes)
        return as_profile(x0, game.sizes)
    T = abs(float(t))
    states, cum, _ = _run(game, z0, T, np.array([T]), opts, backward=t < 0)
    if cumulative and cum is not None:
        return CumulativeState.from_flat(cum[-1], game.sizes)
    return StrategyProfile.from_flat(states[-1], game.sizes, tol=1e-10)


def evolve_cloud(game: Game, points: Sequence, sample_times: Sequence[float],
                 opts: IntegratorOptions | None = None) -> list[CloudSnapshot]:
    """Integrate a cloud of interior profiles and snapshot it at ``sample_times``."""
    opts = opts or IntegratorOptions()
    times = np.asarray(sorted(float(s) for s in sample_times))
    if times.size == 0 or times[0] < 0:
        raise ValueError("sample times must be non-negative")
    z0 = []
    for k, p in enumerate(points):
        try:
            z0.append(_initial_state(game, p, opts))
        except (BoundaryPoint, InvalidProfile) as exc:
            raise type(exc)(f"point {k}: {exc}") from exc
    z0 = np.stack(z0)
    try:
        states, cum, _ = _run(game, z0, float(times[-1]), times, opts)
    except StepSizeUnderflow as exc:
        raise StepSizeUnderflow(f"{exc} (worst point {exc.point_index})", t=exc.t,
                                point_index=exc.point_index) from exc
    return [CloudSnapshot(float(t), states[k], None if cum is None else cum[k])
            for k, t in enumerate(times)]
