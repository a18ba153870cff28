"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or directly with ``python3 tests/test_acceptance.py``.
"""

import itertools
import time

import numpy as np
import pytest

from replab.analysis import (boundary_gap_bound, detect_period, find_divergence_witness, kl_sum, kl_trace,
                             project_to_face, recurrence_stats, time_average, volume_trace)
from replab.cli import disk_cloud
from replab.dynamics import IntegratorOptions, evolve_cloud, flow_at, integrate
from replab.equilibrium import find_max_support_nash, is_nash
from replab.game import (RPS, RPS_FORK, lift_to_two_player, make_game, one_player, random_antisymmetric,
                         zero_sum_decomposition)
from replab.errors import NoCrossing
from replab.transform import CumulativeState, divergence_from_profile_flat, x_from_y_flat, y_from_x_flat

UNIFORM = np.full(3, 1 / 3)
FORK_EQ = np.array([1 / 3, 1 / 3, 1 / 3, 0])
RESULTS: dict[int, tuple[bool, str]] = {}


def _record(num, ok, detail):
    RESULTS[num] = (bool(ok), detail)
    return ok


def _random_interior(rng, k, n=3):
    return [rng.dirichlet(np.ones(n)) for _ in range(k)]


# -- criteria ----------------------------------------------------------------------------

def criterion_1():
    t0 = time.perf_counter()
    traj = integrate(one_player(RPS), [0.5, 0.25, 0.25], IntegratorOptions(max_time=1000), reference=UNIFORM)
    dt = time.perf_counter() - t0
    drift = traj.diagnostics.kl_drift
    ok = drift < 1e-5 and dt < 5
    return _record(1, ok, f"KL conservation: drift {drift:.2e} (< 1e-5), {dt:.2f}s (< 5s)")


def criterion_2():
    t0 = time.perf_counter()
    traj = integrate(one_player(RPS_FORK), [0.25] * 4, IntegratorOptions(max_time=200))
    kl = kl_trace(traj, FORK_EQ).kl_values
    dt = time.perf_counter() - t0
    worst = float(np.max(np.diff(kl)))
    drop = float(kl[0] - kl[-1])
    fork = float(traj.states[-1, 3])
    ok = worst <= 0 and drop > 0.01 and fork < 1e-3 and dt < 5
    return _record(2, ok, f"KL decrease: max step {worst:.2e} (<= 0), drop {drop:.4f} (> 0.01), "
                          f"final fork {fork:.1e} (< 1e-3), {dt:.2f}s (< 5s)")


def criterion_3():
    t0 = time.perf_counter()
    game = one_player(RPS_FORK)
    traj = integrate(game, [3 / 16, 5 / 16, 1 / 4, 1 / 4], IntegratorOptions(max_time=500))
    tail = traj.tail(0.2)
    fork = float(tail.states[:, 3].max())
    est = detect_period(project_to_face(tail, (0, 1, 2)), tol=1e-4)
    dt = time.perf_counter() - t0
    ok = fork < 1e-3 and est.period is not None and est.return_error < 1e-4 and dt < 10
    return _record(3, ok, f"boundary cycle: tail fork max {fork:.1e} (< 1e-3), period {est.period}, "
                          f"return error {est.return_error:.1e} (< 1e-4), {dt:.2f}s (< 10s)")


def criterion_4():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = 0.0
    games = [one_player(random_antisymmetric(int(n), rng, scale=3.0)) for n in rng.integers(2, 9, size=100)]
    for _ in range(20):
        sizes = [int(k) for k in rng.integers(2, 6, size=3)]
        mats = {(i, i): random_antisymmetric(sizes[i], rng, scale=3.0) for i in range(3)}
        for i, j in itertools.permutations(range(3), 2):
            if rng.random() < 0.7:  # general-sum cross edges, some one-directional
                mats[(i, j)] = rng.normal(scale=3.0, size=(sizes[i], sizes[j]))
        games.append(make_game(mats, sizes=sizes))
    for g in games:
        y = rng.normal(scale=2.0, size=(1000, g.dim - g.n_players))
        worst = max(worst, float(np.max(np.abs(divergence_from_profile_flat(g, x_from_y_flat(g.sizes, y))))))
    found = 0
    for n in rng.integers(2, 9, size=100):
        while True:
            a = rng.normal(size=(n, n))
            if zero_sum_decomposition(a).max_violation > 0.1:
                break
        if find_divergence_witness(one_player(a), rng, draws=1000) is not None:
            found += 1
    dt = time.perf_counter() - t0
    ok = worst < 1e-9 and found == 100 and dt < 30
    return _record(4, ok, f"divergence: max |div| {worst:.1e} over {len(games)} games (< 1e-9), "
                          f"witnesses {found}/100, {dt:.2f}s (< 30s)")


CLOUD_CENTER, CLOUD_RADIUS, CLOUD_SEED = (0.0, 0.0), 0.3, 0


def criterion_5():
    t0 = time.perf_counter()
    pts = disk_cloud(CLOUD_CENTER, CLOUD_RADIUS, 500, CLOUD_SEED)
    snaps = evolve_cloud(one_player(RPS), [CumulativeState([p]) for p in pts], [0, 112, 225])
    vt = volume_trace(snaps)
    dt = time.perf_counter() - t0
    dev = vt.max_relative_deviation
    ok = dev < 0.02 and dt < 60
    vols = ", ".join(f"{v:.4f}" for v in vt.volumes)
    return _record(5, ok, f"cloud volume: areas [{vols}], max deviation {dev:.2%} (< 2%), {dt:.2f}s (< 60s)")


_ORBITS_6 = []


def criterion_6():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    game = one_player(RPS)
    counts = []
    _ORBITS_6.clear()
    for x0 in _random_interior(rng, 20):
        traj = integrate(game, x0, IntegratorOptions(max_time=500))
        _ORBITS_6.append((x0, traj))
        counts.append(len(recurrence_stats(traj, eps=1e-2)))
    dt = time.perf_counter() - t0
    ok = min(counts) >= 1 and dt < 60
    return _record(6, ok, f"recurrence: fewest returns {min(counts)} over 20 orbits (>= 1), {dt:.2f}s (< 60s)")


def criterion_7():
    rng = np.random.default_rng(7)
    game = one_player(RPS)
    errs, backs, gaps, avgs = [], [], [], []
    for x0 in _random_interior(rng, 10):
        horizon = 60.0
        while True:
            try:
                coarse = detect_period(integrate(game, x0, IntegratorOptions(max_time=horizon)), tol=1e-6)
                break
            except NoCrossing:  # slow orbit near the boundary, look further
                horizon *= 2
        fine_opts = IntegratorOptions(max_time=horizon, rel_tol=1e-12, abs_tol=1e-14)
        fine = detect_period(integrate(game, x0, fine_opts), tol=1e-6)
        errs.append(coarse.return_error)
        if coarse.period is None or fine.period is None:
            backs.append(np.inf)
            gaps.append(np.inf)
            avgs.append(np.inf)
            continue
        backs.append(float(np.max(np.abs(flow_at(game, x0, coarse.period).flat - x0))))
        gaps.append(abs(coarse.period - fine.period))
        avgs.append(float(np.max(np.abs(time_average(game, x0, coarse.period) - UNIFORM))))
    ok = max(errs) < 1e-6 and max(backs) < 1e-5 and max(gaps) < 1e-5 and max(avgs) < 1e-4
    return _record(7, ok, f"periodicity: return error {max(errs):.1e} (< 1e-6), one-period return "
                          f"{max(backs):.1e} (< 1e-5), period tolerance gap {max(gaps):.1e} (< 1e-5), "
                          f"time average {max(avgs):.1e} (< 1e-4)")


def criterion_8():
    if not _ORBITS_6:
        criterion_6()
    margins = []
    for x0, traj in _ORBITS_6:
        delta = boundary_gap_bound(UNIFORM, kl_sum(UNIFORM, x0))
        margins.append(float(traj.states.min()) - delta)
    ok = min(margins) >= 0
    return _record(8, ok, f"boundary gap: smallest (min coordinate - bound) {min(margins):.2e} (>= 0)")


def _oracle_supports(a):
    n = a.shape[0]
    found = {}
    for k in range(1, n + 1):
        for s in itertools.combinations(range(n), k):
            s = list(s)
            m = np.vstack([a[np.ix_(s, s)], np.ones(k)])
            rhs = np.append(np.zeros(k), 1.0)
            xs, *_ = np.linalg.lstsq(m, rhs, rcond=None)
            if np.max(np.abs(m @ xs - rhs)) > 1e-9 or xs.min() <= 1e-9:
                continue
            x = np.zeros(n)
            x[s] = xs
            if np.max(a @ x) <= 1e-9:
                found[tuple(s)] = x
    return found


def criterion_9():
    rng = np.random.default_rng(9)
    mismatches, worst = 0, 0.0
    for n in rng.integers(1, 6, size=500):
        a = random_antisymmetric(int(n), rng)
        res = find_max_support_nash(a)
        oracle = _oracle_supports(a)
        size = max(len(s) for s in oracle)
        best = sorted(s for s in oracle if len(s) == size)[0]
        if res.support != (best,) or not np.allclose(res.profile.flat, oracle[best], atol=1e-9):
            mismatches += 1
        worst = max(worst, is_nash(one_player(a), res.profile).max_residual)
    ok = mismatches == 0 and worst <= 1e-9
    return _record(9, ok, f"equilibrium oracle: {mismatches}/500 mismatches, max Nash residual {worst:.1e} (<= 1e-9)")


def criterion_10():
    rng = np.random.default_rng(10)
    ex = ey = 0.0
    for n in range(2, 17):
        x = rng.dirichlet(np.ones(n), size=10_000 // 15 + 1)
        y = y_from_x_flat((n,), x)
        ex = max(ex, float(np.max(np.abs(x_from_y_flat((n,), y) - x))))
        ey = max(ey, float(np.max(np.abs(y_from_x_flat((n,), x_from_y_flat((n,), y)) - y))))
    ok = ey < 1e-10 and ex < 1e-12
    return _record(10, ok, f"round trip: |f(f^-1(y)) - y| {ey:.1e} (< 1e-10), |f^-1(f(x)) - x| {ex:.1e} (< 1e-12)")


def criterion_11():
    rng = np.random.default_rng(11)
    disagreements, drift = 0, 0.0
    for k in range(50):
        n = int(rng.integers(2, 7))
        g1 = one_player(random_antisymmetric(n, rng))
        g2 = lift_to_two_player(g1)
        for x in (find_max_support_nash(g1).profile.flat, rng.dirichlet(np.ones(n))):
            if bool(is_nash(g1, x)) != bool(is_nash(g2, [x, x])):
                disagreements += 1
        if k < 10:
            x0 = rng.dirichlet(np.ones(n))
            traj = integrate(g2, [x0, x0], IntegratorOptions(max_time=100))
            drift = max(drift, float(np.max(np.abs(traj.states[:, :n] - traj.states[:, n:]))))
    ok = disagreements == 0 and drift < 1e-8
    return _record(11, ok, f"two-player lift: {disagreements} Nash disagreements, diagonal drift {drift:.1e} (< 1e-8)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
            criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("crit", CRITERIA, ids=[f"criterion_{k}" for k in range(1, 12)])
def test_acceptance(crit):
    ok = crit()
    num = CRITERIA.index(crit) + 1
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {RESULTS[num][1]}"
    print(line)
    assert ok, line


if __name__ == "__main__":
    for c in CRITERIA:
        c()
        k = CRITERIA.index(c) + 1
        ok, detail = RESULTS[k]
        print(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}", flush=True)
