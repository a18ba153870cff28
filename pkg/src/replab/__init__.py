"""Replicator dynamics on polymatrix games with self-loops."""

from .dynamics import IntegratorOptions, Trajectory, evolve_cloud, flow_at, integrate
from .equilibrium import find_interior_nash, find_interior_nash_polymatrix, find_max_support_nash, is_nash
from .game import (Game, StrategyProfile, lift_to_two_player, make_game, one_player, payoff, payoff_vector,
                   validate_game, zero_sum_decomposition)
from .transform import CumulativeState, from_cumulative, to_cumulative

__version__ = "0.1.0"
