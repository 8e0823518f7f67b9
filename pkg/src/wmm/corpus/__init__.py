"""Litmus corpus shipped with the package.

Each `NAME.wmm` program has a `NAME.json` companion holding the expected
verdict per model, so new tests need no code changes.
"""

import json
from importlib import resources

MODEL_KEYS = ("sc", "tso", "pso", "rmo", "power")


def _dir():
    return resources.files(__name__)


def names():
    return sorted(p.name[:-4] for p in _dir().iterdir() if p.name.endswith(".wmm"))


def source(name):
    return (_dir() / f"{name}.wmm").read_text()


def path(name):
    return str(_dir() / f"{name}.wmm")


def metadata(name):
    return json.loads((_dir() / f"{name}.json").read_text())


def load(name):
    from ..frontend import parse_program
    return parse_program(source(name))


def corpus_manifest():
    """(program name, model, expected verdict) for every corpus cell."""
    out = []
    for n in names():
        exp = metadata(n)["expected"]
        for m in MODEL_KEYS:
            out.append((n, m, exp[m]))
    return out
