"""Finite abstractions of disturbed linear plants, robust LTL synthesis on
them, and sampled-data controllers derived from the resulting strategies."""
from .abstraction import AbstractionParams, build_abstraction, suggest_params
from .game import check_bisim, synthesize, transfer_strategy
from .logic.formula import parse, tr_delta, tr_eps
from .plant import LinearSystem, check_stability
from .runtime import DisturbanceGenerator, derive_controller, run_closed_loop, verdict

__version__ = "0.1.0"

__all__ = [
    "AbstractionParams", "DisturbanceGenerator", "LinearSystem", "build_abstraction",
    "check_bisim", "check_stability", "derive_controller", "parse", "run_closed_loop",
    "suggest_params", "synthesize", "tr_delta", "tr_eps", "transfer_strategy", "verdict",
]
