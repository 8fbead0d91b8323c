from .alpharank import (
    AlphaRankResult,
    PayoffMatrix,
    alpha_sweep,
    alpharank_at_alpha,
    best_reply_graph,
    bootstrap_masses,
    default_alpha_grid,
    mcc_analysis,
    payoff_matrix,
    stationary_distribution,
    transition_matrix,
)
from .btd import (
    BTDFit,
    btd_fit,
    btd_normalized_ability,
    btd_probs,
    calibration,
    calibration_from_probs,
    simulate_matches,
)
from .elo import EloTable, elo_run, elo_update, expected_score
from .matches import Match, as_matches

__all__ = [
    "AlphaRankResult", "BTDFit", "EloTable", "Match", "PayoffMatrix", "alpha_sweep", "alpharank_at_alpha",
    "as_matches", "best_reply_graph", "bootstrap_masses", "btd_fit", "btd_normalized_ability", "btd_probs",
    "calibration", "calibration_from_probs", "default_alpha_grid", "elo_run", "elo_update", "expected_score",
    "mcc_analysis", "payoff_matrix", "simulate_matches", "stationary_distribution", "transition_matrix",
]
