"""Parse → event graph → critical cycles → selection → instrumentation."""

from dataclasses import dataclass
from typing import List

from .axiomatic import get_model
from .cycles import DEFAULT_MAX_LEN, build_event_graph, find_critical_cycles, select_pairs
from .transform import instrument


@dataclass
class PipelineResult:
    graph: object
    cycles: List
    selection: object
    transformed: object

    @property
    def program(self):
        return self.transformed.program


def analyse(prog, model, strategy="all", max_len=DEFAULT_MAX_LEN):
    A = get_model(model)
    g = build_event_graph(prog, A)
    cycles = find_critical_cycles(g, A, max_len)
    sel = select_pairs(cycles, A, strategy)
    return PipelineResult(g, cycles, sel, instrument(prog, sel, A, g))


def instrument_for_model(prog, model, strategy="all"):
    """The SC program whose behaviours are those of `prog` on `model`."""
    return analyse(prog, model, strategy).transformed
