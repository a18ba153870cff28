"""Log-ratio chart between interior profiles and cumulative-payoff space.

For player ``i`` the chart sends ``x_i`` to ``y_i = log(x_i[1:] / x_i[0])``.
Replicator dynamics in these coordinates reads
``dy_i[a]/dt = u_i[a+1](x) - u_i[0](x)``, and its divergence has a closed form
that only involves the self-loop matrices.

The ``*_flat`` helpers work on concatenated coordinates and broadcast over
leading batch axes; the integrator uses them directly.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundaryPoint, InvalidProfile
from .game import Game, StrategyProfile, as_profile

#: smallest coordinate accepted by ``to_cumulative``
INTERIOR_FLOOR = 1e-300


class CumulativeState:
    """One real vector of length ``n_i - 1`` per player."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable):
        blocks = tuple(np.array(b, dtype=float).reshape(-1) for b in blocks)
        for i, b in enumerate(blocks):
            if not np.all(np.isfinite(b)):
                raise InvalidProfile(f"player {i}: cumulative coordinates must be finite")
            b.setflags(write=False)
        self.blocks = blocks

    @classmethod
    def from_flat(cls, flat, sizes: Sequence[int]) -> CumulativeState:
        flat = np.asarray(flat, dtype=float).reshape(-1)
        dims = [n - 1 for n in sizes]
        if flat.size != sum(dims):
            raise InvalidProfile(f"cumulative state has {flat.size} entries, expected {sum(dims)}")
        return cls(np.split(flat, np.cumsum(dims)[:-1]))

    @property
    def sizes(self) -> tuple[int, ...]:
        """Action counts of the players (one more than each block length)."""
        return tuple(b.size + 1 for b in self.blocks)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks) if self.blocks else np.zeros(0)

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    def __iter__(self):
        return iter(self.blocks)

    def tolist(self):
        return [b.tolist() for b in self.blocks]

    def __repr__(self):
        return f"CumulativeState({self.tolist()})"


def as_cumulative(y, sizes: Sequence[int] | None = None) -> CumulativeState:
    if isinstance(y, CumulativeState):
        state = y
    elif (isinstance(y, np.ndarray) and y.ndim == 1) or (len(y) and np.ndim(list(y)[0]) == 0):
        state = CumulativeState.from_flat(y, sizes if sizes is not None else [len(y) + 1])
    else:
        state = CumulativeState(y)
    if sizes is not None and state.sizes != tuple(sizes):
        raise InvalidProfile(f"cumulative state sizes {state.sizes} do not match {tuple(sizes)}")
    return state


# -- flat, batched kernels -----------------------------------------------------

@lru_cache(maxsize=256)
def _cum_offsets(sizes: tuple[int, ...]) -> tuple[int, ...]:
    return (0, *np.cumsum([n - 1 for n in sizes]).tolist())


def cumulative_offsets(sizes: Sequence[int]) -> tuple[int, ...]:
    return _cum_offsets(tuple(sizes))


def x_from_y_flat(sizes: Sequence[int], y: np.ndarray) -> np.ndarray:
    """Inverse chart, max-shifted so large coordinates cannot overflow."""
    y = np.asarray(y, dtype=float)
    if len(sizes) == 1:
        z = np.empty(y.shape[:-1] + (y.shape[-1] + 1,))
        z[..., 0] = 0.0
        z[..., 1:] = y
        z -= z.max(axis=-1, keepdims=True)
        np.exp(z, out=z)
        z /= z.sum(axis=-1, keepdims=True)
        return z
    offs = cumulative_offsets(sizes)
    parts = []
    for i, n in enumerate(sizes):
        yi = y[..., offs[i]:offs[i + 1]]
        z = np.concatenate([np.zeros(yi.shape[:-1] + (1,)), yi], axis=-1)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        parts.append(e / e.sum(axis=-1, keepdims=True))
    return np.concatenate(parts, axis=-1)


def y_from_x_flat(sizes: Sequence[int], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    offs = np.concatenate([[0], np.cumsum(sizes)])
    logx = np.log(x)
    parts = [logx[..., offs[i] + 1:offs[i + 1]] - logx[..., offs[i]:offs[i] + 1]
             for i in range(len(sizes))]
    return np.concatenate(parts, axis=-1)


def log_x_from_y_flat(sizes: Sequence[int], y: np.ndarray) -> np.ndarray:
    """``log x`` computed directly from ``y`` (exact even where ``x`` underflows)."""
    y = np.asarray(y, dtype=float)
    offs = cumulative_offsets(sizes)
    parts = []
    for i in range(len(sizes)):
        yi = y[..., offs[i]:offs[i + 1]]
        z = np.concatenate([np.zeros(yi.shape[:-1] + (1,)), yi], axis=-1)
        m = z.max(axis=-1, keepdims=True)
        parts.append(z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True)))
    return np.concatenate(parts, axis=-1)


def strategy_field_flat(game: Game, x: np.ndarray) -> np.ndarray:
    """Replicator field ``x_a (u_a(x) - u(x))`` per player, batched."""
    u = x @ game.block.T
    starts = list(game.offsets[:-1])
    avg = np.add.reduceat(x * u, starts, axis=-1)
    return x * (u - np.repeat(avg, game.sizes, axis=-1))


def cumulative_field_flat(game: Game, y: np.ndarray) -> np.ndarray:
    """``u_{i,a+1} - u_{i,0}`` evaluated at the inverse chart of ``y``, batched."""
    return x_from_y_flat(game.sizes, y) @ game._cumulative_rows_t


# -- public operations -----------------------------------------------------------

def to_cumulative(x, floor: float = INTERIOR_FLOOR, sizes: Sequence[int] | None = None) -> CumulativeState:
    x = as_profile(x, sizes)
    for i, b in enumerate(x):
        if np.any(b < floor):
            raise BoundaryPoint(f"player {i}: coordinate {b.min()!r} is below the interior floor {floor}")
    return CumulativeState(np.log(b[1:]) - np.log(b[0]) for b in x)


def from_cumulative(y, sizes: Sequence[int] | None = None) -> StrategyProfile:
    y = as_cumulative(y, sizes)
    flat = x_from_y_flat(y.sizes, y.flat)
    # normalization is exact up to rounding; profile check uses the default tolerance
    return StrategyProfile.from_flat(flat, y.sizes)


def vector_field_strategy(game: Game, x) -> list[np.ndarray]:
    x = as_profile(x, game.sizes)
    return game.split(strategy_field_flat(game, x.flat))


def vector_field_cumulative(game: Game, y) -> list[np.ndarray]:
    y = as_cumulative(y, game.sizes)
    flat = cumulative_field_flat(game, y.flat)
    return list(CumulativeState.from_flat(flat, game.sizes).blocks)


def divergence_from_profile_flat(game: Game, x: np.ndarray) -> np.ndarray:
    """Closed-form divergence at strategy ``x`` (batched).

    For each self-loop ``A`` this is ``sum_a x_a A[a,a] - x.A.x``; edges between
    distinct players do not contribute.
    """
    x = np.asarray(x, dtype=float)
    total = np.zeros(x.shape[:-1])
    for (i, j), a in game.edges.items():
        if i != j:
            continue
        xi = x[..., game.slice(i)]
        total = total + xi @ np.diag(a) - np.einsum("...a,ab,...b->...", xi, a, xi)
    return total


def divergence_cumulative(game: Game, y) -> float:
    """Divergence of the cumulative-space replicator field at ``y``."""
    y = as_cumulative(y, game.sizes)
    x = x_from_y_flat(game.sizes, y.flat)
    return float(divergence_from_profile_flat(game, x))
