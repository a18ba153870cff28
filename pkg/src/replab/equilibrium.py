"""Nash equilibria of zero-sum games.

For an antisymmetric one-player matrix the game value is zero, so a profile
supported on ``S`` is an equilibrium iff ``(A x)_a = 0`` on ``S`` and
``(A x)_b <= 0`` off ``S``. Each candidate support therefore reduces to a
kernel computation plus a small linear program that picks the point whose
smallest coordinate is largest (the interior-most representative when the
solution set is not a single point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import linprog

from .errors import NotAntisymmetric, NotZeroSum, TooManyActions
from .game import (ZERO_SUM_TOL, Game, StrategyProfile, as_profile, is_antisymmetric, payoff_vectors,
                   single_loop_matrix, supports_by_size, zero_sum_violation)

SUPPORT_THRESHOLD = 1e-9
NASH_TOL = 1e-9
RANK_TOL = 1e-10
MAX_ENUMERATION_ACTIONS = 16


@dataclass(frozen=True)
class NashCheck:
    ok: bool
    residuals: tuple[float, ...]

    def __bool__(self):
        return self.ok

    @property
    def max_residual(self) -> float:
        return max(self.residuals)


@dataclass(frozen=True)
class EquilibriumResult:
    profile: StrategyProfile
    support: tuple[tuple[int, ...], ...]
    is_interior: bool
    certificate: tuple[float, ...]
    solution_dim: int = 0

    @property
    def degenerate(self) -> bool:
        """True when the equilibrium is one point of a larger solution set."""
        return self.solution_dim > 0

    def to_dict(self):
        return {
            "profile": self.profile.tolist(),
            "support": [list(s) for s in self.support],
            "is_interior": self.is_interior,
            "residuals": list(self.certificate),
            "degenerate": self.degenerate,
            "solution_dim": self.solution_dim,
        }


def is_nash(game: Game, x, nash_tol: float = NASH_TOL) -> NashCheck:
    """Check that no pure deviation ``a`` of any player beats ``u_i(x)`` by more than ``nash_tol``.

    Deviations are scored against the current profile, self-loop term included,
    i.e. ``u_{i,a}(x) - u_i(x)``; this is the population (evolutionary) notion
    of equilibrium used throughout.
    """
    x = as_profile(x, game.sizes)
    u = payoff_vectors(game, x)
    res = []
    for i in range(game.n_players):
        ui = u[game.slice(i)]
        res.append(float(ui.max() - x[i] @ ui))
    return NashCheck(all(r <= nash_tol for r in res), tuple(res))


def _check_antisymmetric(a: np.ndarray, tol: float):
    if not is_antisymmetric(a, tol):
        raise NotAntisymmetric(f"matrix is not antisymmetric (max |A + A^T| = "
                               f"{np.max(np.abs(a + a.T)):.3g})")


def _loop_matrix(game_or_matrix) -> np.ndarray:
    if isinstance(game_or_matrix, Game):
        return single_loop_matrix(game_or_matrix)
    return np.array(game_or_matrix, dtype=float)


def _max_min_over_affine(w0: np.ndarray, basis: np.ndarray, pos: np.ndarray,
                         sum_rows: list[np.ndarray], ub_rows: np.ndarray | None = None):
    """Maximize ``min(w[pos])`` over ``w = w0 + basis @ z``.

    ``sum_rows`` are index arrays whose entries of ``w`` must sum to one,
    ``ub_rows @ w <= 0`` are extra inequalities. Returns ``(w, t)`` or ``None``
    when infeasible.
    """
    k = basis.shape[1]
    # variables (z, t); minimize -t
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_ub = [np.hstack([-basis[pos], np.ones((pos.size, 1))])]
    b_ub = [w0[pos]]
    if ub_rows is not None and ub_rows.size:
        a_ub.append(np.hstack([ub_rows @ basis, np.zeros((ub_rows.shape[0], 1))]))
        b_ub.append(-(ub_rows @ w0))
    a_eq = b_eq = None
    if sum_rows:
        a_eq = np.array([np.append(basis[idx].sum(axis=0), 0.0) for idx in sum_rows])
        b_eq = np.array([1.0 - w0[idx].sum() for idx in sum_rows])
    bounds = [(None, None)] * k + [(None, 1.0)]
    res = linprog(c, A_ub=np.vstack(a_ub), b_ub=np.concatenate(b_ub), A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return None
    return w0 + basis @ res.x[:k], float(res.x[-1])


def _solve_support(a: np.ndarray, support: tuple[int, ...], threshold: float, nash_tol: float):
    """Equilibrium of antisymmetric ``a`` with exactly this support, or ``None``."""
    n = a.shape[0]
    s = np.asarray(support, dtype=int)
    off = np.setdiff1d(np.arange(n), s)
    kern = null_space(a[np.ix_(s, s)], rcond=RANK_TOL)
    dim = kern.shape[1]
    if dim == 0:
        return None
    dev = a[np.ix_(off, s)]
    if dim == 1:
        v = kern[:, 0]
        total = v.sum()
        if abs(total) < 1e-12:
            return None
        xs = v / total
        if xs.min() <= threshold:
            return None
        if off.size and (dev @ xs).max() > nash_tol:
            return None
    else:
        found = _max_min_over_affine(np.zeros(s.size), kern, np.arange(s.size),
                                     [np.arange(s.size)], dev)
        if found is None or found[1] <= threshold:
            return None
        xs = found[0]
        xs = np.maximum(xs, 0.0)
        xs /= xs.sum()
        if off.size and (dev @ xs).max() > nash_tol:
            return None
    x = np.zeros(n)
    x[s] = xs
    return x, dim - 1


def _result(game: Game, x: np.ndarray, threshold: float, solution_dim: int) -> EquilibriumResult:
    prof = StrategyProfile.from_flat(x, game.sizes, tol=1e-10)
    check = is_nash(game, prof)
    support = tuple(tuple(int(a) for a in np.flatnonzero(b > threshold)) for b in prof)
    interior = all(len(s) == n for s, n in zip(support, game.sizes))
    return EquilibriumResult(prof, support, interior, check.residuals, solution_dim)


def _as_game(game_or_matrix) -> Game:
    if isinstance(game_or_matrix, Game):
        return game_or_matrix
    from .game import one_player
    return one_player(game_or_matrix)


def find_interior_nash(game_or_matrix, tol: float = ZERO_SUM_TOL,
                       threshold: float = SUPPORT_THRESHOLD) -> EquilibriumResult | None:
    """Fully mixed equilibrium of a one-player antisymmetric game, or ``None``.

    Interior equilibria are exactly the points of ``ker A`` inside the open
    simplex.
    """
    a = _loop_matrix(game_or_matrix)
    _check_antisymmetric(a, tol)
    found = _solve_support(a, tuple(range(a.shape[0])), threshold, NASH_TOL)
    if found is None:
        return None
    x, dim = found
    return _result(_as_game(game_or_matrix), x, threshold, dim)


def find_max_support_nash(game_or_matrix, tol: float = ZERO_SUM_TOL,
                          threshold: float = SUPPORT_THRESHOLD,
                          nash_tol: float = NASH_TOL) -> EquilibriumResult:
    """Equilibrium of largest support (lexicographically first among ties)."""
    a = _loop_matrix(game_or_matrix)
    _check_antisymmetric(a, tol)
    n = a.shape[0]
    if n > MAX_ENUMERATION_ACTIONS:
        raise TooManyActions(f"support enumeration is limited to {MAX_ENUMERATION_ACTIONS} actions, got {n}")
    for support in supports_by_size(n):
        found = _solve_support(a, support, threshold, nash_tol)
        if found is not None:
            x, dim = found
            return _result(_as_game(game_or_matrix), x, threshold, dim)
    # a finite zero-sum game always has an equilibrium; reaching here means tolerances are too tight
    raise RuntimeError("no equilibrium found; matrix is numerically ill-conditioned")


def find_interior_nash_polymatrix(game: Game, tol: float = ZERO_SUM_TOL,
                                  threshold: float = SUPPORT_THRESHOLD) -> EquilibriumResult | None:
    """Fully mixed equilibrium of a zero-sum polymatrix game, or ``None``.

    Solves the indifference system ``u_{i,a}(x) = v_i`` for every action,
    together with the simplex constraints, and picks the interior-most point
    of its solution set.
    """
    viol = zero_sum_violation(game)
    if viol > tol:
        raise NotZeroSum(f"block payoff matrix is not antisymmetric (max |A + A^T| = {viol:.3g})")
    d, n_p = game.dim, game.n_players
    owner = np.repeat(np.arange(n_p), game.sizes)
    g = np.zeros((d + n_p, d + n_p))
    h = np.zeros(d + n_p)
    g[:d, :d] = game.block
    g[np.arange(d), d + owner] = -1.0
    for i in range(n_p):
        g[d + i, game.slice(i)] = 1.0
        h[d + i] = 1.0
    w0, *_ = np.linalg.lstsq(g, h, rcond=None)
    if np.max(np.abs(g @ w0 - h)) > 1e-9:
        return None
    kern = null_space(g, rcond=RANK_TOL)
    if kern.shape[1] == 0:
        x = w0[:d]
        if x.min() <= threshold:
            return None
        return _result(game, x, threshold, 0)
    found = _max_min_over_affine(w0, kern, np.arange(d), [])
    if found is None or found[1] <= threshold:
        return None
    x = found[0][:d]
    # re-normalize away LP rounding; values stay on the solution set to ~1e-15
    x = np.concatenate([b / b.sum() for b in game.split(np.maximum(x, 0.0))])
    return _result(game, x, threshold, kern.shape[1])
