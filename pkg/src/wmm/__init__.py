"""Weak memory verification by program instrumentation.

Concurrent programs written in a small imperative language are checked
against TSO, PSO, RMO and Power by rewriting the accesses that sit on
critical cycles into store-buffer / delayed-read operations, then exploring
the rewritten program under sequential consistency.
"""

from .frontend import parse_program, pretty_print, build_cfg
from .axiomatic import MODELS, SC, TSO, PSO, RMO, POWER, get_model
from .explorer import explore, replay, reachable_outcomes
from .pipeline import instrument_for_model

__all__ = [
    "parse_program",
    "pretty_print",
    "build_cfg",
    "MODELS",
    "SC",
    "TSO",
    "PSO",
    "RMO",
    "POWER",
    "get_model",
    "explore",
    "replay",
    "reachable_outcomes",
    "instrument_for_model",
]

__version__ = "0.1.0"
