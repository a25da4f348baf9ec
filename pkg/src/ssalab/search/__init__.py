from .core import (EXHAUSTED, Action, EpisodeResult, Outcome, ReactiveOracle, SearchState, StepEvent,
                   TrailEntry, backjump_target, initial_state, replay, run_search, step)
from .policies import (TopKSampler, VsidsPolicy, exhaustive_policy, heuristic_scores, make_policy,
                       occurrence_domain_policy, random_policy)

__all__ = [
    "EXHAUSTED", "Action", "EpisodeResult", "Outcome", "ReactiveOracle", "SearchState", "StepEvent",
    "TrailEntry", "backjump_target", "initial_state", "replay", "run_search", "step", "TopKSampler",
    "VsidsPolicy", "exhaustive_policy", "heuristic_scores", "make_policy", "occurrence_domain_policy",
    "random_policy",
]
