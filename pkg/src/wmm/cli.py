"""Command line driver: graph, transform, check, oracle-check, corpus.

Exit codes follow the explorer: 0 safe, 1 violated, 2 bound exceeded;
usage, input and parse errors exit with 3.
"""

import argparse
import json
import sys
import time

from . import corpus
from .axiomatic import (
    MODEL_CHAIN, TooManyEvents, UnsupportedProgram, allowed_outcomes, enumerate_witnesses,
    event_structure, get_model,
)
from .cycles import STRATEGIES, cycle_report, dot_export
from .explorer import DEFAULT_MAX_STEPS, DEFAULT_UNWIND, explore, reachable_outcomes
from .frontend import WmmSyntaxError, parse_program, pretty_print
from .machine import check_theorem1, check_theorem2, lemma1, minimal_selection
from .pipeline import analyse

ACTIONS = ("graph", "transform", "check", "oracle-check", "corpus")
USAGE_ERROR = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="wmm", description="Verify small concurrent programs against weak memory models.")
    p.add_argument("--model", default="sc", type=str.lower,
                   choices=[m.name.lower() for m in MODEL_CHAIN])
    p.add_argument("--pairs", default="all", choices=["all", "one-per-cycle"])
    p.add_argument("--dump-dot", metavar="FILE", help="write the event graph in DOT format")
    p.add_argument("--dump", metavar="FILE", help="write the instrumented program")
    p.add_argument("--unwind", type=int, default=DEFAULT_UNWIND, help="loop unwinding bound")
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS, help="state budget")
    p.add_argument("--json", metavar="FILE", help="write the JSON report")
    p.add_argument("action", choices=ACTIONS)
    p.add_argument("input", nargs="?", help=".wmm file or corpus test name")
    return p


def _read_program(arg):
    """Parse a file, falling back to a corpus test of that name."""
    try:
        with open(arg) as fh:
            text, label = fh.read(), arg
    except OSError:
        if arg in corpus.names():
            text, label = corpus.source(arg), corpus.path(arg)
        else:
            raise
    try:
        return parse_program(text), label
    except WmmSyntaxError as e:
        where = f"{label}:{e.line}" if e.line is not None else label
        raise WmmSyntaxError(f"{where}: {e.msg}") from None


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _pairs_json(g, sel):
    return [[role, g[a].name, g[b].name] for role, a, b in
            sorted(sel.pairs, key=lambda p: (p[1], p[2], p[0]))]


def run_graph(args, prog):
    res = analyse(prog, args.model, args.pairs)
    dot = dot_export(res.graph, res.cycles)
    report = {"model": get_model(args.model).name,
              "cycles": cycle_report(res.graph, res.cycles, args.model),
              "selected": _pairs_json(res.graph, res.selection)}
    if args.dump_dot:
        _write(args.dump_dot, dot)
    else:
        sys.stdout.write(dot)
    if args.json:
        _write(args.json, json.dumps(report, indent=2) + "\n")
    for c in report["cycles"]:
        lines = " ".join(f"{t}:{l}" for t, l in c["lines"])
        print(f"cycle {','.join(c['events'])}  lines {lines}", file=sys.stderr)
    return 0


def run_transform(args, prog):
    res = analyse(prog, args.model, args.pairs)
    text = pretty_print(res.program)
    if args.dump:
        _write(args.dump, text)
    else:
        sys.stdout.write(text)
    return 0


def run_check(args, prog):
    t0 = time.perf_counter()
    res = analyse(prog, args.model, args.pairs)
    if args.dump:
        _write(args.dump, pretty_print(res.program))
    if args.dump_dot:
        _write(args.dump_dot, dot_export(res.graph, res.cycles))
    v = explore(res.transformed, loop_unwind=args.unwind, max_steps=args.max_steps)
    out = v.to_json()
    out.update(model=get_model(args.model).name, pairs=_pairs_json(res.graph, res.selection),
               strategy=args.pairs, seconds=round(time.perf_counter() - t0, 3))
    if args.json:
        _write(args.json, json.dumps(out, indent=2) + "\n")
    pairs = ", ".join(f"({a},{b})" for _, a, b in out["pairs"]) or "none"
    print(f"{v.status}  model={out['model']} pairs={pairs} states={v.states}")
    if v.status == "violated":
        print(f"  {v.kind} assertion fails at line {v.line}")
        if v.final_state:
            print(f"  state: {json.dumps(v.final_state)}")
    return v.exit_code


def oracle_report(prog, models=MODEL_CHAIN):
    """Theorem suite and outcome comparison for a straight-line program."""
    sym = event_structure(prog)
    E = sym.E
    failures = []
    witnesses = list(enumerate_witnesses(E))
    for X in witnesses:
        if not lemma1(E, X):
            failures.append({"check": "lemma1", "rf": sorted(map(list, X.rf_pairs()))})
        for A in models:
            if not check_theorem1(E, X, A):
                failures.append({"check": "theorem1", "model": A.name, "rf": sorted(map(list, X.rf_pairs()))})
            if not check_theorem2(E, X, A, minimal_selection(E, X, A)):
                failures.append({"check": "theorem2", "model": A.name, "rf": sorted(map(list, X.rf_pairs()))})
    outcomes = {}
    for A in models:
        ax = allowed_outcomes(prog, A)
        per = {}
        for strategy in STRATEGIES:
            ex = reachable_outcomes(analyse(prog, A, strategy).transformed)
            per[strategy] = ex == ax
            if ex != ax:
                failures.append({"check": "outcomes", "model": A.name, "strategy": strategy,
                                 "only_axiomatic": sorted(map(list, ax - ex)),
                                 "only_explorer": sorted(map(list, ex - ax))})
        outcomes[A.name] = {"allowed": len(ax), **per}
    return {"events": len(E.program_events), "witnesses": len(witnesses),
            "outcomes": outcomes, "failures": failures, "agree": not failures}


def run_oracle(args, prog):
    try:
        rep = oracle_report(prog)
    except (TooManyEvents, UnsupportedProgram) as e:
        print(f"oracle-check: {e}", file=sys.stderr)
        return USAGE_ERROR
    if args.json:
        _write(args.json, json.dumps(rep, indent=2) + "\n")
    print(f"{'agree' if rep['agree'] else 'DISAGREE'}  events={rep['events']} "
          f"witnesses={rep['witnesses']} failures={len(rep['failures'])}")
    for m, o in rep["outcomes"].items():
        print(f"  {m:<5} allowed={o['allowed']} all={o['all']} one_per_cycle={o['one_per_cycle']}")
    return 0 if rep["agree"] else 1


def run_corpus(args):
    rows, worst = [], 0
    for name, model, expected in corpus.corpus_manifest():
        prog = corpus.load(name)
        unwind = corpus.metadata(name).get("unwind", args.unwind)
        t0 = time.perf_counter()
        v = explore(analyse(prog, model, args.pairs).transformed, loop_unwind=unwind,
                    max_steps=args.max_steps)
        ok = v.status == expected
        worst = max(worst, 0 if ok else 1)
        rows.append({"test": name, "model": model, "expected": expected, "got": v.status,
                     "states": v.states, "seconds": round(time.perf_counter() - t0, 3)})
        print(f"{'ok  ' if ok else 'FAIL'} {name:<12} {model:<5} {v.status:<9} states={v.states}")
    if args.json:
        _write(args.json, json.dumps(rows, indent=2) + "\n")
    return worst


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.pairs = args.pairs.replace("-", "_")
    if args.unwind < 1 or args.max_steps < 1:
        print("wmm: --unwind and --max-steps must be positive", file=sys.stderr)
        return USAGE_ERROR
    if args.action == "corpus":
        return run_corpus(args)
    if not args.input:
        print(f"wmm: {args.action} needs an input file", file=sys.stderr)
        return USAGE_ERROR
    try:
        prog, _ = _read_program(args.input)
    except OSError as e:
        print(f"wmm: cannot read {args.input}: {e.strerror}", file=sys.stderr)
        return USAGE_ERROR
    except WmmSyntaxError as e:
        print(f"wmm: {e.msg}", file=sys.stderr)
        return USAGE_ERROR
    handler = {"graph": run_graph, "transform": run_transform, "check": run_check,
               "oracle-check": run_oracle}[args.action]
    return handler(args, prog)


if __name__ == "__main__":
    sys.exit(main())
