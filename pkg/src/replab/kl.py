"""Kullback-Leibler divergence from a reference profile, summed over players."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import InfiniteDivergence
from .game import as_profile
from .transform import log_x_from_y_flat


def kl_terms(x_star: np.ndarray, log_x: np.ndarray) -> np.ndarray:
    """``sum_a x*_a (log x*_a - log x_a)`` over the last axis, with ``0 log 0 = 0``."""
    x_star = np.asarray(x_star, dtype=float)
    mask = x_star > 0
    ls = np.zeros_like(x_star)
    ls[mask] = np.log(x_star[mask])
    with np.errstate(invalid="ignore"):
        t = np.where(mask, x_star * (ls - log_x), 0.0)
    return t.sum(axis=-1)


def kl_sum(x_star, x, sizes: Sequence[int] | None = None) -> float:
    """Sum over players of ``KL(x*_i || x_i)`` in nats."""
    x_star = as_profile(x_star, sizes)
    x = as_profile(x, x_star.sizes)
    xs, xf = x_star.flat, x.flat
    bad = (xs > 0) & (xf <= 0)
    if np.any(bad):
        raise InfiniteDivergence(f"x has zero mass on actions {np.flatnonzero(bad).tolist()} "
                                 "in the support of the reference")
    with np.errstate(divide="ignore"):
        return float(kl_terms(xs, np.log(xf)))


def kl_along(x_star_flat: np.ndarray, states: np.ndarray, cumulative: np.ndarray | None,
             sizes: Sequence[int]) -> np.ndarray:
    """KL from ``x*`` for a stack of states.

    Uses the cumulative coordinates when available, so coordinates that have
    underflowed to zero in strategy space still give finite, accurate values.
    """
    if cumulative is not None:
        log_x = log_x_from_y_flat(sizes, cumulative)
    else:
        with np.errstate(divide="ignore"):
            log_x = np.log(states)
    return kl_terms(x_star_flat, log_x)
