"""Graphical polymatrix games with self-loops.

A game is a directed graph over players. Each edge ``(i, j)`` carries a payoff
matrix ``A[i, j]`` of shape ``n_i x n_j``; the entry ``(a, b)`` is what player
``i`` earns playing ``a`` against player ``j`` playing ``b``. A self-loop
``(i, i)`` is a game the player plays against its own mixed strategy, which is
how single-population evolutionary games are expressed.

Internally every game is also kept as one dense block matrix over the
concatenated action space, so that all per-action payoffs are a single
matrix-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateEdge, GameError, InvalidProfile, NotAntisymmetric, ShapeMismatch

#: absolute tolerance for antisymmetry / zero-sum checks on user-typed matrices
ZERO_SUM_TOL = 1e-9
#: absolute tolerance on the simplex constraint of a profile
SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class Player:
    actions: int
    name: str | None = None
    labels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    matrix: np.ndarray

    @property
    def is_self_loop(self) -> bool:
        return self.source == self.target


@dataclass(frozen=True)
class GameSpec:
    """Unvalidated game description, as parsed from a game file."""

    players: tuple[Player, ...]
    edges: tuple[Edge, ...]
    meta: dict = field(default_factory=dict)


class Game:
    """A validated polymatrix game. Treat as immutable."""

    def __init__(self, spec: GameSpec):
        self.spec = spec
        self.sizes = tuple(int(p.actions) for p in spec.players)
        self.offsets = tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.sizes)]))
        self.n_players = len(self.sizes)
        self.dim = self.offsets[-1]
        self.edges: dict[tuple[int, int], np.ndarray] = {}
        block = np.zeros((self.dim, self.dim))
        for e in spec.edges:
            m = np.array(e.matrix, dtype=float)
            m.setflags(write=False)
            self.edges[(e.source, e.target)] = m
            block[self.slice(e.source), self.slice(e.target)] = m
        block.setflags(write=False)
        self.block = block
        # first action index of each player, used by the cumulative field
        self._first = np.array(self.offsets[:-1])
        self._rest = np.array([k for i in range(self.n_players)
                               for k in range(self.offsets[i] + 1, self.offsets[i + 1])], dtype=int)
        self._rest_owner = np.array([i for i in range(self.n_players)
                                     for _ in range(self.sizes[i] - 1)], dtype=int)
        # rows u_{i,a+1} - u_{i,0} of the cumulative field, as one matrix
        cum = block[self._rest] - block[self._first[self._rest_owner]]
        self._cumulative_rows_t = np.ascontiguousarray(cum.T)

    def __repr__(self):
        name = self.spec.meta.get("name")
        return f"Game(name={name!r}, sizes={self.sizes}, edges={sorted(self.edges)})"

    @property
    def name(self) -> str | None:
        return self.spec.meta.get("name")

    def slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def matrix(self, i: int, j: int) -> np.ndarray | None:
        return self.edges.get((i, j))

    def self_loop(self, i: int) -> np.ndarray | None:
        return self.edges.get((i, i))

    def split(self, flat) -> list[np.ndarray]:
        flat = np.asarray(flat, dtype=float)
        return [flat[..., self.slice(i)] for i in range(self.n_players)]

    def action_labels(self, i: int) -> list[str]:
        p = self.spec.players[i]
        if p.labels:
            return list(p.labels)
        return [str(a) for a in range(p.actions)]


def validate_game(spec: GameSpec) -> Game:
    if not spec.players:
        raise GameError("a game needs at least one player")
    for k, p in enumerate(spec.players):
        if int(p.actions) < 1 or int(p.actions) != p.actions:
            raise ShapeMismatch(f"player {k}: action count must be a positive integer, got {p.actions}")
        if p.labels is not None and len(p.labels) != p.actions:
            raise ShapeMismatch(f"player {k}: {len(p.labels)} labels for {p.actions} actions")
    n = len(spec.players)
    seen = set()
    for e in spec.edges:
        if not (0 <= e.source < n and 0 <= e.target < n):
            raise GameError(f"edge ({e.source}, {e.target}) refers to an unknown player")
        key = (e.source, e.target)
        if key in seen:
            kind = "self-loop" if e.is_self_loop else "edge"
            raise DuplicateEdge(f"duplicate {kind} {key}")
        seen.add(key)
        want = (spec.players[e.source].actions, spec.players[e.target].actions)
        m = np.asarray(e.matrix, dtype=float)
        if m.ndim != 2 or m.shape != want:
            raise ShapeMismatch(f"edge {key}: matrix shape {m.shape}, expected {want}")
        if not np.all(np.isfinite(m)):
            raise GameError(f"edge {key}: non-finite matrix entry")
    return Game(spec)


def make_game(matrices: dict[tuple[int, int], Sequence], sizes: Sequence[int] | None = None,
              name: str | None = None) -> Game:
    """Shorthand constructor: ``make_game({(0, 0): rps})``."""
    mats = {k: np.array(v, dtype=float) for k, v in matrices.items()}
    if sizes is None:
        found = {}
        for (i, j), m in mats.items():
            if m.ndim == 2:
                found.setdefault(i, m.shape[0])
                found.setdefault(j, m.shape[1])
        sizes = [found[i] for i in range(max(found) + 1)]
    players = tuple(Player(int(s)) for s in sizes)
    edges = tuple(Edge(i, j, m) for (i, j), m in mats.items())
    meta = {"name": name} if name else {}
    return validate_game(GameSpec(players, edges, meta))


def one_player(matrix, name: str | None = None) -> Game:
    return make_game({(0, 0): matrix}, name=name)


# -- strategy profiles ---------------------------------------------------------

class StrategyProfile:
    """One probability vector per player."""

    __slots__ = ("blocks",)

    def __init__(self, blocks: Iterable, tol: float = SIMPLEX_TOL):
        blocks = tuple(np.array(b, dtype=float).reshape(-1) for b in blocks)
        for i, b in enumerate(blocks):
            if b.size == 0:
                raise InvalidProfile(f"player {i}: empty strategy")
            if not np.all(np.isfinite(b)) or np.any(b < 0):
                raise InvalidProfile(f"player {i}: entries must be finite and non-negative")
            if abs(b.sum() - 1.0) > tol:
                raise InvalidProfile(f"player {i}: entries sum to {b.sum()!r}, not 1")
            b.setflags(write=False)
        self.blocks = blocks

    @classmethod
    def from_flat(cls, flat, sizes: Sequence[int], tol: float = SIMPLEX_TOL) -> StrategyProfile:
        flat = np.asarray(flat, dtype=float).reshape(-1)
        if flat.size != sum(sizes):
            raise InvalidProfile(f"profile has {flat.size} entries, game has {sum(sizes)} actions")
        cuts = np.cumsum(sizes)[:-1]
        return cls(np.split(flat, cuts), tol=tol)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, i):
        return self.blocks[i]

    def __iter__(self):
        return iter(self.blocks)

    def is_interior(self) -> bool:
        return all(np.all(b > 0) for b in self.blocks)

    def tolist(self) -> list[list[float]]:
        return [b.tolist() for b in self.blocks]

    def __repr__(self):
        return f"StrategyProfile({self.tolist()})"


def as_profile(x, sizes: Sequence[int] | None = None, tol: float = SIMPLEX_TOL) -> StrategyProfile:
    """Coerce a flat vector, a list of per-player vectors or a profile."""
    if isinstance(x, StrategyProfile):
        prof = x
    else:
        if isinstance(x, np.ndarray) and x.ndim == 1:
            flat = True
        else:
            seq = list(x)
            flat = len(seq) > 0 and np.ndim(seq[0]) == 0
            x = seq
        if flat:
            prof = StrategyProfile.from_flat(x, sizes if sizes is not None else [len(x)], tol=tol)
        else:
            prof = StrategyProfile(x, tol=tol)
    if sizes is not None and prof.sizes != tuple(sizes):
        raise InvalidProfile(f"profile sizes {prof.sizes} do not match game sizes {tuple(sizes)}")
    return prof


def uniform_profile(game: Game) -> StrategyProfile:
    return StrategyProfile(np.full(n, 1.0 / n) for n in game.sizes)


# -- payoffs -------------------------------------------------------------------

def payoff_vectors(game: Game, x) -> np.ndarray:
    """All per-action payoffs ``u_{i,a}(x)`` as one flat vector (batch over leading axes)."""
    flat = x.flat if isinstance(x, StrategyProfile) else np.asarray(x, dtype=float)
    return flat @ game.block.T


def payoff_vector(game: Game, x, i: int) -> np.ndarray:
    """Per-action payoff of player ``i``: the sum of ``A[i, j] @ x_j`` over out-edges."""
    x = as_profile(x, game.sizes)
    u = np.zeros(game.sizes[i])
    for (src, dst), m in game.edges.items():
        if src == i:
            u += m @ x[dst]
    return u


def payoff(game: Game, x, i: int) -> float:
    x = as_profile(x, game.sizes)
    return float(x[i] @ payoff_vector(game, x, i))


def payoffs(game: Game, x) -> np.ndarray:
    x = as_profile(x, game.sizes)
    return np.array([payoff(game, x, i) for i in range(game.n_players)])


# -- zero-sum structure ----------------------------------------------------------

@dataclass(frozen=True)
class ZeroSumVerdict:
    is_zero_sum: bool
    antisymmetric_part: np.ndarray | None
    column_constant_part: np.ndarray | None
    max_violation: float

    def to_dict(self):
        return {
            "is_zero_sum": self.is_zero_sum,
            "antisymmetric_part": None if self.antisymmetric_part is None
            else self.antisymmetric_part.tolist(),
            "column_constants": None if self.column_constant_part is None
            else self.column_constant_part.tolist(),
            "max_violation": self.max_violation,
        }


def zero_sum_decomposition(matrix, tol: float = ZERO_SUM_TOL) -> ZeroSumVerdict:
    """Split a square matrix into antisymmetric plus column-constant parts.

    The split exists iff ``A[a,a] + A[b,b] - A[a,b] - A[b,a] == 0`` for every
    pair of actions; the column constants are then the diagonal entries.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"zero-sum decomposition needs a square matrix, got shape {a.shape}")
    d = np.diag(a)
    resid = d[:, None] + d[None, :] - a - a.T
    viol = float(np.max(np.abs(resid))) if a.size else 0.0
    if viol > tol:
        return ZeroSumVerdict(False, None, None, viol)
    # B + B^T equals minus the residual, so B is antisymmetric to tol
    b = a - d[None, :]
    return ZeroSumVerdict(True, b, d.copy(), viol)


def is_antisymmetric(matrix, tol: float = ZERO_SUM_TOL) -> bool:
    a = np.asarray(matrix, dtype=float)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and bool(np.all(np.abs(a + a.T) <= tol))


def zero_sum_violation(game: Game) -> float:
    """Largest entry of ``A + A^T`` for the block matrix (absent edges count as zero)."""
    return float(np.max(np.abs(game.block + game.block.T), initial=0.0))


def is_zero_sum(game: Game, tol: float = ZERO_SUM_TOL) -> bool:
    return zero_sum_violation(game) <= tol


def self_loop_verdicts(game: Game, tol: float = ZERO_SUM_TOL) -> dict[int, ZeroSumVerdict]:
    return {i: zero_sum_decomposition(m, tol) for (i, j), m in game.edges.items() if i == j}


def replace_self_loop(game: Game, i: int, matrix) -> Game:
    """Copy of ``game`` with player ``i``'s self-loop replaced."""
    edges = [e for e in game.spec.edges if not (e.source == i and e.target == i)]
    edges.append(Edge(i, i, np.array(matrix, dtype=float)))
    return validate_game(GameSpec(game.spec.players, tuple(edges), dict(game.spec.meta)))


def single_loop_matrix(game: Game) -> np.ndarray:
    """The matrix of a one-player game (zero matrix if the loop is absent)."""
    if game.n_players != 1:
        raise GameError(f"expected a one-player game, got {game.n_players} players")
    m = game.self_loop(0)
    return np.zeros((game.sizes[0],) * 2) if m is None else np.array(m)


def lift_to_two_player(game: Game, tol: float = ZERO_SUM_TOL) -> Game:
    """Two-player game with edges ``A`` and ``-A^T`` equivalent to a one-player antisymmetric game.

    Symmetric profiles ``(x, x)`` of the lifted game reproduce the one-player
    payoffs, and the diagonal is invariant under the replicator flow.
    """
    a = single_loop_matrix(game)
    if not is_antisymmetric(a, tol):
        raise NotAntisymmetric(f"self-loop is not antisymmetric (max |A + A^T| = "
                               f"{np.max(np.abs(a + a.T)):.3g})")
    p = game.spec.players[0]
    meta = dict(game.spec.meta)
    if game.name:
        meta["name"] = f"{game.name} (two-player lift)"
    spec = GameSpec((p, p), (Edge(0, 1, a.copy()), Edge(1, 0, -a.T)), meta)
    return validate_game(spec)


def restrict_to_support(game: Game, support: Sequence[int]) -> Game:
    """Face game of a one-player game: the loop matrix restricted to ``support``."""
    a = single_loop_matrix(game)
    idx = np.asarray(sorted(support), dtype=int)
    p = game.spec.players[0]
    labels = tuple(p.labels[k] for k in idx) if p.labels else None
    sub = a[np.ix_(idx, idx)]
    player = Player(len(idx), p.name, labels)
    meta = dict(game.spec.meta)
    if game.name:
        meta["name"] = f"{game.name} restricted to {list(map(int, idx))}"
    return validate_game(GameSpec((player,), (Edge(0, 0, sub),), meta))


def random_antisymmetric(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    m = rng.normal(scale=scale, size=(n, n))
    return np.triu(m, 1) - np.triu(m, 1).T


def supports_by_size(n: int):
    """All non-empty subsets of ``range(n)``: larger first, lexicographic within a size."""
    for k in range(n, 0, -1):
        yield from combinations(range(n), k)


# bundled example matrices
RPS = np.array([[0.0, 1.0, -1.0], [-1.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
RPS_FORK = np.array([
    [0.0, -1.0, 1.0, 10.0],
    [1.0, 0.0, -1.0, 10.0],
    [-1.0, 1.0, 0.0, 10.0],
    [-10.0, -10.0, -10.0, 0.0],
])


def antisymmetrized(game: Game, tol: float = ZERO_SUM_TOL) -> Game:
    """Replace every zero-sum-equivalent self-loop by its antisymmetric part.

    Column-constant terms shift all of a player's action payoffs equally, so
    the replicator flow is unchanged. Loops that are not zero-sum equivalent
    are kept as they are.
    """
    out = game
    for i, v in self_loop_verdicts(game, tol).items():
        if v.is_zero_sum and not is_antisymmetric(game.self_loop(i), 0.0):
            out = replace_self_loop(out, i, v.antisymmetric_part)
    return out
