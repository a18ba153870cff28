"""Game files, trajectory tables and SVG frames."""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import GameError
from .game import Edge, Game, GameSpec, Player, validate_game

FLOAT_FMT = "%.17g"
N_BANDS = 8
# colorblind-safe sequential palette, low KL to high KL
PALETTE = ("#440154", "#46327e", "#365c8d", "#277f8e", "#1fa187", "#4ac16d", "#a0da39", "#fde725")


# -- games ---------------------------------------------------------------------------------

def game_from_dict(data: dict) -> Game:
    try:
        players = tuple(Player(p["actions"], p.get("name"), tuple(p["labels"]) if p.get("labels") else None)
                        for p in data["players"])
        edges = tuple(Edge(int(e["from"]), int(e["to"]), e["matrix"]) for e in data.get("edges", []))
    except (KeyError, TypeError) as exc:
        raise GameError(f"malformed game description: {exc!r}") from exc
    return validate_game(GameSpec(players, edges, dict(data.get("meta", {}))))


def game_to_dict(game: Game) -> dict:
    players = []
    for p in game.spec.players:
        d: dict = {"actions": p.actions}
        if p.name:
            d["name"] = p.name
        if p.labels:
            d["labels"] = list(p.labels)
        players.append(d)
    edges = [{"from": i, "to": j, "matrix": m.tolist()} for (i, j), m in game.edges.items()]
    out = {"players": players, "edges": edges}
    if game.spec.meta:
        out["meta"] = game.spec.meta
    return out


def load_game(path) -> Game:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GameError(f"{path}: not valid JSON ({exc})") from exc
    return game_from_dict(data)


def dump_game(game: Game, path):
    Path(path).write_text(json.dumps(game_to_dict(game), indent=2) + "\n")


def bundled_game_path(name: str) -> Path:
    """Path of a game file shipped with the package (``rps.json``, ``rps_fork.json``)."""
    return Path(str(resources.files("replab") / "data" / name))


def resolve_game_path(arg: str) -> Path:
    """A user path if it exists, otherwise a bundled game of that name."""
    p = Path(arg)
    if p.exists():
        return p
    bundled = bundled_game_path(p.name)
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"game file not found: {arg}")


# -- tables ---------------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return FLOAT_FMT % v


def write_table(path, header: Sequence[str], rows: np.ndarray):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r])
    return header, data.reshape(-1, len(header))


def state_columns(sizes: Sequence[int]) -> list[str]:
    return [f"x_{i}_{a}" for i, n in enumerate(sizes) for a in range(n)]


def write_trajectory(traj, path):
    write_table(path, ["t", *state_columns(traj.game.sizes)], np.column_stack([traj.times, traj.states]))


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# -- svg --------------------------------------------------------------------------------

def kl_bands(reference_kl: np.ndarray, n_bands: int = N_BANDS) -> np.ndarray:
    """Inner band edges: quantiles of the reference KL values."""
    return np.quantile(reference_kl, np.arange(1, n_bands) / n_bands)


def band_of(kl: np.ndarray, edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(edges, kl, side="right")


def write_svg(path, points: np.ndarray, bands: np.ndarray, bounds: tuple[float, float, float, float],
              title: str = "", size: int = 480):
    """Scatter plot of 2-D points colored by band index, within a fixed data window."""
    x0, x1, y0, y1 = bounds
    pad = 20
    sx = (size - 2 * pad) / (x1 - x0)
    sy = (size - 2 * pad) / (y1 - y0)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    if title:
        lines.append(f'<text x="{pad}" y="14" font-family="sans-serif" font-size="12">{title}</text>')
    # cumulative origin (the equilibrium of a symmetric game) as crosshairs when in view
    if x0 < 0 < x1:
        cx = pad + (0 - x0) * sx
        lines.append(f'<line x1="{cx:.2f}" y1="{pad}" x2="{cx:.2f}" y2="{size - pad}" stroke="#ccc"/>')
    if y0 < 0 < y1:
        cy = size - pad - (0 - y0) * sy
        lines.append(f'<line x1="{pad}" y1="{cy:.2f}" x2="{size - pad}" y2="{cy:.2f}" stroke="#ccc"/>')
    for (px, py), b in zip(points, bands):
        cx = pad + (px - x0) * sx
        cy = size - pad - (py - y0) * sy
        lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2" fill="{PALETTE[int(b) % len(PALETTE)]}" '
                     f'data-band="{int(b)}"/>')
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")
