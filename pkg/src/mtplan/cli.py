"""Command-line front end.

Input documents (JSON):

profiles (``--profiles``)::

    {"schema": "mtplan.profiles/1", "d": D, "k": K,
     "tasks": [{"task_id": "a", "branch_outputs": [K x F_0 rows, ..., K x F_{D-1} rows]}, ...]}

block costs (``--costs``)::

    {"schema": "mtplan.blockcosts/1", "unit": "time",
     "exec_cost": [per layer], "load_cost": [per layer], "param_size": [per layer],
     "branch_layers": [optional layer index per branch point], "head_layers": 1}

cost matrix (``--matrix``)::

    {"schema": "mtplan.costmatrix/1", "n": n, "unit": "time", "rows": [[...], ...],
     "precedence": [[i, j], ...], "conditional": [[i, j, p], ...]}

Precedence files hold one ``i j`` pair per line and conditional files one
``i j p`` triple per line; ``#`` starts a comment.  Exit status is 0 on
success, 2 for bad input, 3 for violated constraints and 4 when a size cap
is exceeded.  ``bench`` exits with 1 when a known optimum is missed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tsplib
from .affinity import AffinityTensor, RepresentationProfile, affinity_tensor
from .costmodel import UNITS, CostMatrix, cost_matrix, total_execution_cost
from .errors import InputError, MtplanError
from .ordering import DEFAULT_EXACT_CAP, GaParams, Objective, OrderingProblem, solve
from .taskgraph import (
    DEFAULT_ENUMERATION_CAP,
    BlockCostProfile,
    BranchPointConfig,
    TaskGraph,
    enumerate_task_graphs,
)
from .tradeoff import GraphScore, TradeoffCurve, default_budgets, graph_id, score_graph, sweep

log = logging.getLogger("mtplan")

DEFAULT_BRANCH_POINTS = 3


# ---------------------------------------------------------------------------
# documents


def _read_json(path: str | Path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc


def _check_schema(doc, expected: str, path) -> None:
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object")
    schema = doc.get("schema", expected)
    if schema != expected:
        raise InputError(f"{path}: schema {schema!r} is not {expected!r}")


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def load_profiles(path) -> list[RepresentationProfile]:
    doc = _read_json(path)
    _check_schema(doc, "mtplan.profiles/1", path)
    try:
        d, k, tasks = int(doc["d"]), int(doc["k"]), doc["tasks"]
        profiles = [
            RepresentationProfile(str(t["task_id"]), tuple(np.asarray(b, dtype=float) for b in t["branch_outputs"]))
            for t in tasks
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad profiles document: {exc}") from exc
    for p in profiles:
        if p.d != d or p.k != k:
            raise InputError(
                f"{path}: task {p.task_id!r} has D={p.d}, K={p.k} but the header says D={d}, K={k}"
            )
    return profiles


def load_block_costs(path, d: int) -> tuple[BranchPointConfig, BlockCostProfile]:
    doc = _read_json(path)
    _check_schema(doc, "mtplan.blockcosts/1", path)
    try:
        costs = BlockCostProfile(
            tuple(doc["exec_cost"]), tuple(doc["load_cost"]), tuple(doc["param_size"]),
            doc.get("unit", "time"),
        )
        head = int(doc.get("head_layers", 1))
        if "branch_layers" in doc:
            cfg = BranchPointConfig(tuple(doc["branch_layers"]), costs.num_layers, head)
        else:
            cfg = BranchPointConfig.evenly_spaced(d, costs.num_layers, head)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad block-cost document: {exc}") from exc
    if costs.unit not in UNITS:
        raise InputError(f"{path}: unit must be one of {UNITS}")
    if cfg.num_branch_points != d:
        raise InputError(
            f"{path}: lists {cfg.num_branch_points} branch layers but D={d} branch points are in use"
        )
    return cfg, costs


def load_cost_matrix(path) -> tuple[CostMatrix, set, dict]:
    doc = _read_json(path)
    _check_schema(doc, "mtplan.costmatrix/1", path)
    try:
        matrix = CostMatrix(np.asarray(doc["rows"], dtype=float), doc.get("unit", "time"))
        precedence = {(int(i), int(j)) for i, j in doc.get("precedence", [])}
        conditional = {(int(i), int(j)): float(p) for i, j, p in doc.get("conditional", [])}
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad cost-matrix document: {exc}") from exc
    if "n" in doc and int(doc["n"]) != matrix.n:
        raise InputError(f"{path}: n={doc['n']} but the matrix has {matrix.n} rows")
    return matrix, precedence, conditional


def cost_matrix_document(matrix: CostMatrix, precedence=(), conditional=None) -> dict:
    return {
        "schema": "mtplan.costmatrix/1",
        "n": matrix.n,
        "unit": matrix.unit,
        "rows": matrix.c.tolist(),
        "precedence": sorted([list(p) for p in precedence]),
        "conditional": sorted([[i, j, p] for (i, j), p in (conditional or {}).items()]),
    }


def _pair_lines(path, width: int) -> list[tuple]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split()
        if not line:
            continue
        try:
            if len(line) != width:
                raise ValueError
            rows.append(tuple(int(v) for v in line[:2]) + tuple(float(v) for v in line[2:]))
        except ValueError:
            raise InputError(f"{path}:{lineno}: expected {width} numbers, got {raw.strip()!r}") from None
    return rows


def load_precedence(path) -> set[tuple[int, int]]:
    return set(_pair_lines(path, 2))


def load_conditional(path) -> dict[tuple[int, int], float]:
    return {(i, j): p for i, j, p in _pair_lines(path, 3)}


def load_scores(path) -> list[GraphScore]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    scores = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        _check_schema(doc, "mtplan.graphscore/1", f"{path}:{lineno}")
        scores.append(GraphScore.from_dict(doc))
    return scores


def _parse_budgets(text: str | None) -> list[float] | None:
    if not text:
        return None
    try:
        return [float(b) for b in text.split(",") if b.strip()]
    except ValueError:
        raise InputError(f"--budgets must be comma-separated numbers, got {text!r}") from None


def _ga_params(args) -> GaParams:
    return GaParams(rng_seed=args.seed)


# ---------------------------------------------------------------------------
# commands


def _affinity(args) -> AffinityTensor:
    if getattr(args, "affinity", None):
        doc = _read_json(args.affinity)
        _check_schema(doc, "mtplan.affinity/1", args.affinity)
        return AffinityTensor.from_dict(doc)
    if not args.profiles:
        raise InputError("need --profiles or --affinity")
    return affinity_tensor(load_profiles(args.profiles))


def cmd_affinity(args) -> int:
    profiles = load_profiles(args.profiles)
    tensor = affinity_tensor(profiles)
    path = _write(Path(args.out_dir), "affinity.json", _dumps(tensor.to_dict()))
    print(f"n={tensor.n} D={tensor.d} K={profiles[0].k} -> {path}")
    return 0


def _curve_outputs(out_dir: Path, scores: list[GraphScore], budgets) -> TradeoffCurve:
    curve = sweep(scores, budgets if budgets is not None else default_budgets(scores))
    _write(out_dir, "tradeoff.csv", curve.to_csv())
    point = curve.points[curve.selected]
    selected = {
        "schema": "mtplan.selected/1",
        "budget": point.budget,
        "graph_id": graph_id(point.best.graph),
        "variety_norm": point.variety_norm,
        "cost_norm": point.cost_norm,
        **point.best.to_dict(),
    }
    _write(out_dir, "selected.json", _dumps(selected))
    return curve


def cmd_graphgen(args) -> int:
    tensor = _affinity(args)
    d = args.branch_points
    if tensor.d != d:
        raise InputError(
            f"the affinity has D={tensor.d} branch points but --branch-points is {d}"
        )
    cfg, costs = load_block_costs(args.costs, d)
    precedence = load_precedence(args.precedence) if args.precedence else set()
    conditional = load_conditional(args.conditional) if args.conditional else {}
    # validates the constraints once instead of per graph
    OrderingProblem(np.zeros((tensor.n, tensor.n)), frozenset(precedence), conditional)
    ga = _ga_params(args)
    scores = []
    for graph in enumerate_task_graphs(tensor.n, d, cap=args.cap):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            scores.append(
                score_graph(graph, tensor, cfg, costs, precedence=precedence,
                            conditional=conditional, solver=args.solver,
                            exact_cap=args.exact_cap, ga_params=ga)
            )
    scores.sort(key=lambda s: s.graph.key())
    out_dir = Path(args.out_dir)
    lines = [json.dumps({"schema": "mtplan.graphscore/1", "id": graph_id(s.graph), **s.to_dict()},
                        sort_keys=True) for s in scores]
    _write(out_dir, "graphs.jsonl", "\n".join(lines) + "\n")
    curve = _curve_outputs(out_dir, scores, _parse_budgets(args.budgets))
    chosen = curve.points[curve.selected]
    print(f"{len(scores)} graphs scored, {len(curve.points)} budgets; "
          f"selected {graph_id(chosen.best.graph)} at budget {chosen.budget:g} -> {out_dir}")
    return 0


def cmd_tradeoff(args) -> int:
    scores = load_scores(args.scores)
    out_dir = Path(args.out_dir)
    curve = _curve_outputs(out_dir, scores, _parse_budgets(args.budgets))
    chosen = curve.points[curve.selected]
    print(f"selected {graph_id(chosen.best.graph)} at budget {chosen.budget:g} -> {out_dir}")
    return 0


def cmd_order(args) -> int:
    graph_costs = None
    if args.matrix:
        matrix, precedence, conditional = load_cost_matrix(args.matrix)
    elif args.graph and args.costs:
        doc = _read_json(args.graph)
        # accept selected.json and graph-score records as well as bare graphs
        graph = TaskGraph.from_dict(doc.get("graph", doc))
        cfg, costs = load_block_costs(args.costs, graph.d)
        matrix, precedence, conditional = cost_matrix(graph, cfg, costs), set(), {}
        graph_costs = (graph, cfg, costs)
    else:
        raise InputError("need --matrix, or --graph together with --costs")
    if args.precedence:
        precedence |= load_precedence(args.precedence)
    if args.conditional:
        conditional.update(load_conditional(args.conditional))
    problem = OrderingProblem(matrix.c, frozenset(precedence), conditional, Objective(args.objective))
    solution = solve(problem, args.solver, exact_cap=args.exact_cap, ga_params=_ga_params(args))
    doc = solution.to_dict()
    doc["unit"] = matrix.unit
    if graph_costs is not None:
        doc["total_execution_cost"] = total_execution_cost(*graph_costs, solution.order, conditional)
    path = _write(Path(args.out_dir), "ordering.json", _dumps(doc))
    print(f"order {' '.join(map(str, solution.order))} fitness {solution.fitness:g} "
          f"({solution.solver}) -> {path}")
    return 0


def _bench_paths(paths: Sequence[str]) -> list[str]:
    if paths:
        return list(paths)
    return [str(tsplib.bundled_path(name)) for name in tsplib.BUNDLED_INSTANCES]


def cmd_bench(args) -> int:
    overlay = tsplib.parse_overlay(Path(args.conditional).read_text(), args.conditional) \
        if args.conditional else None
    header = f"{'name':<12}{'nodes':>6}{'pre':>5}{'optimal_known':>15}{'found':>12}{'gap%':>8}{'solver':>9}{'sec':>8}"
    print(header)
    rows, missed, broken = [], False, False
    for path in _bench_paths(args.paths):
        try:
            inst = tsplib.load(path)
            problem = tsplib.to_problem(inst, overlay)
        except MtplanError as exc:
            print(f"{Path(path).name}: {exc}", file=sys.stderr)
            broken = True
            continue
        start = time.perf_counter()
        solution = solve(problem, args.solver, exact_cap=args.exact_cap, ga_params=_ga_params(args))
        elapsed = time.perf_counter() - start
        known = None if overlay else tsplib.known_optimum(inst.name)
        gap = None if not known else 100.0 * (solution.fitness - known) / known
        if gap is not None and gap > 1e-9:
            missed = True
        pre = len(inst.core_precedence)
        rows.append([inst.name, inst.dimension, pre, known, solution.fitness, gap, solution.solver])
        print(f"{inst.name:<12}{inst.dimension:>6}{pre:>5}{'-' if known is None else known:>15}"
              f"{solution.fitness:>12g}{'-' if gap is None else f'{gap:.2f}':>8}"
              f"{solution.solver:>9}{elapsed:>8.2f}")
    if args.out_dir:
        lines = ["name,nodes,pre,optimal_known,found,gap_percent,solver"]
        lines += [",".join("" if v is None else str(v) for v in row) for row in rows]
        _write(Path(args.out_dir), "bench.csv", "\n".join(lines) + "\n")
    if missed:
        return 1
    return 2 if broken else 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtplan",
        description="Plan shared multitask networks and their task execution order.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p, objective=True):
        p.add_argument("--solver", choices=["auto", "exact", "ga"], default="auto",
                       help="auto: exact up to --exact-cap tasks, GA above (default)")
        p.add_argument("--exact-cap", type=int, default=DEFAULT_EXACT_CAP,
                       help="largest task count for the exact solver (default %(default)s)")
        p.add_argument("--seed", type=int, default=0, help="GA random seed (default 0)")
        if objective:
            p.add_argument("--objective", choices=[o.value for o in Objective], default="path")

    p = sub.add_parser("affinity", help="task affinity tensor from representation profiles")
    p.add_argument("--profiles", required=True)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_affinity)

    p = sub.add_parser("graphgen", help="enumerate and score task graphs, pick the trade-off graph")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--profiles")
    src.add_argument("--affinity", help="affinity.json written by the affinity command")
    p.add_argument("--costs", required=True, help="per-layer block costs")
    p.add_argument("--branch-points", type=int, default=DEFAULT_BRANCH_POINTS,
                   help="number of branch points D (default %(default)s)")
    p.add_argument("--budgets", help="comma-separated model-size budgets (default: 32 log-spaced)")
    p.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP,
                   help="maximum number of task graphs to enumerate (default %(default)s)")
    p.add_argument("--precedence")
    p.add_argument("--conditional")
    p.add_argument("--out-dir", default=".")
    solver_flags(p, objective=False)
    p.set_defaults(func=cmd_graphgen)

    p = sub.add_parser("tradeoff", help="redo the budget sweep over an existing graphs.jsonl")
    p.add_argument("--scores", required=True, help="graphs.jsonl written by graphgen")
    p.add_argument("--budgets")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("order", help="optimal task execution order")
    p.add_argument("--matrix", help="cost-matrix document")
    p.add_argument("--graph", help="task graph document or selected.json, used with --costs")
    p.add_argument("--costs", help="per-layer block costs")
    p.add_argument("--precedence")
    p.add_argument("--conditional")
    p.add_argument("--out-dir", default=".")
    solver_flags(p)
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("bench", help="solve TSPLIB/SOP instances and compare with known optima")
    p.add_argument("paths", nargs="*", help="instance files (default: the bundled set)")
    p.add_argument("--conditional", help="overlay of 'i j p' lines applied to every instance")
    p.add_argument("--out-dir")
    solver_flags(p, objective=False)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MtplanError as exc:
        print(f"mtplan {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
