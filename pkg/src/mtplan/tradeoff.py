"""Model-size budget sweep and selection of the variety/cost trade-off graph.

For every budget the lowest-variety graph that fits is picked.  Variety and
execution cost of the picks are min-max normalized over the sweep, and the
point where the two normalized trends are closest is the default selection.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .affinity import AffinityTensor
from .costmodel import cost_matrix, total_execution_cost
from .errors import InputError
from .ordering import DEFAULT_EXACT_CAP, GaParams, Objective, OrderingProblem, solve
from .taskgraph import BlockCostProfile, BranchPointConfig, TaskGraph, model_size, variety_score

__all__ = [
    "DEFAULT_BUDGET_POINTS",
    "EmptyCurveError",
    "GraphScore",
    "SweepPoint",
    "TradeoffCurve",
    "TradeoffWarning",
    "default_budgets",
    "graph_id",
    "score_graph",
    "select_intersection",
    "sweep",
]

DEFAULT_BUDGET_POINTS = 32


class TradeoffWarning(UserWarning):
    """A budget admitted no graph and was left out of the curve."""


class EmptyCurveError(InputError):
    pass


@dataclass(frozen=True)
class GraphScore:
    graph: TaskGraph
    variety: float
    model_size: float
    exec_cost: float
    order: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "graph": self.graph.to_dict(),
            "variety": self.variety,
            "model_size": self.model_size,
            "exec_cost": self.exec_cost,
            "order": list(self.order),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GraphScore":
        try:
            return cls(
                TaskGraph.from_dict(doc["graph"]),
                float(doc["variety"]),
                float(doc["model_size"]),
                float(doc["exec_cost"]),
                tuple(int(t) for t in doc.get("order", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad graph score record: {exc}") from exc


def graph_id(graph: TaskGraph) -> str:
    """Compact label, e.g. ``0.1.2/0.1|2``: members joined by '.', groups by '|', levels by '/'."""
    return "/".join("|".join(".".join(map(str, g)) for g in part) for part in graph.partitions)


def score_graph(
    graph: TaskGraph,
    affinity: AffinityTensor,
    cfg: BranchPointConfig,
    costs: BlockCostProfile,
    *,
    precedence: Iterable[tuple[int, int]] = (),
    conditional: Mapping[tuple[int, int], float] | None = None,
    solver: str = "auto",
    exact_cap: int = DEFAULT_EXACT_CAP,
    ga_params: GaParams | None = None,
) -> GraphScore:
    """Variety, size and execution cost of ``graph``.

    The execution cost is the total cost (first task's full path plus every
    switch) of the best open-path order, found exactly up to ``exact_cap``
    tasks and by the genetic solver above it (see :func:`mtplan.ordering.solve`).
    """
    conditional = dict(conditional or {})
    c = cost_matrix(graph, cfg, costs)
    problem = OrderingProblem(c.c, frozenset(precedence), conditional, Objective.OPEN_PATH)
    solution = solve(problem, solver, exact_cap=exact_cap, ga_params=ga_params)
    exec_cost = total_execution_cost(graph, cfg, costs, solution.order, conditional)
    return GraphScore(
        graph,
        variety_score(graph, affinity),
        model_size(graph, cfg, costs),
        exec_cost,
        solution.order,
    )


@dataclass(frozen=True)
class SweepPoint:
    budget: float
    best: GraphScore
    variety_norm: float
    cost_norm: float


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple[SweepPoint, ...]
    selected: int

    @property
    def budgets(self) -> list[float]:
        return [p.budget for p in self.points]

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["budget", "graph_id", "model_size", "variety", "variety_norm",
                      "cost", "cost_norm", "selected"])
        for k, p in enumerate(self.points):
            out.writerow([
                repr(p.budget), graph_id(p.best.graph), repr(p.best.model_size),
                repr(p.best.variety), repr(p.variety_norm), repr(p.best.exec_cost),
                repr(p.cost_norm), int(k == self.selected),
            ])
        return buf.getvalue()


def _normalize(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return np.clip((values - lo) / (hi - lo), 0.0, 1.0)


def _pick(scored: Sequence[GraphScore], budget: float) -> GraphScore | None:
    fitting = [s for s in scored if s.model_size <= budget]
    if not fitting:
        return None
    return min(fitting, key=lambda s: (s.variety, s.exec_cost, s.graph.key()))


def _closest_index(points: Sequence[SweepPoint]) -> int:
    gaps = [abs(p.variety_norm - p.cost_norm) for p in points]
    # points are in increasing budget order, so the first minimum is the smallest budget
    return int(np.argmin(gaps))


def sweep(scored: Sequence[GraphScore], budgets: Iterable[float]) -> TradeoffCurve:
    """Lowest-variety graph within each budget, with normalized trends.

    Budgets are sorted and deduplicated.  Ties in variety go to the lower
    execution cost, then to the canonical graph order.
    """
    if not scored:
        raise InputError("nothing to sweep: no scored graphs")
    grid = sorted({float(b) for b in budgets})
    if not grid or any(math.isnan(b) for b in grid):
        raise InputError("budgets must be a nonempty list of numbers")
    chosen = []
    for budget in grid:
        best = _pick(scored, budget)
        if best is None:
            warnings.warn(f"no graph fits budget {budget!r}; skipping it", TradeoffWarning, stacklevel=2)
            continue
        chosen.append((budget, best))
    if not chosen:
        smallest = min(s.model_size for s in scored)
        raise EmptyCurveError(
            f"no graph fits any budget; the smallest graph needs {smallest!r}"
        )
    vn = _normalize(np.array([s.variety for _, s in chosen]))
    cn = _normalize(np.array([s.exec_cost for _, s in chosen]))
    points = tuple(
        SweepPoint(b, s, float(v), float(c)) for (b, s), v, c in zip(chosen, vn, cn)
    )
    return TradeoffCurve(points, _closest_index(points))


def select_intersection(curve: TradeoffCurve) -> GraphScore:
    """Graph at the budget where normalized variety and cost are closest."""
    if len(curve.points) < 2:
        raise InputError("selecting an intersection needs at least two sweep points")
    return curve.points[_closest_index(curve.points)].best


def default_budgets(scored: Sequence[GraphScore], num: int = DEFAULT_BUDGET_POINTS) -> list[float]:
    """Log-spaced budgets from the smallest to the largest model size."""
    if not scored:
        raise InputError("no scored graphs to derive budgets from")
    sizes = [s.model_size for s in scored]
    lo, hi = min(sizes), max(sizes)
    if lo <= 0:
        grid = np.linspace(lo, hi, num)
    else:
        grid = np.geomspace(lo, hi, num)
    grid[0], grid[-1] = lo, hi
    return sorted({float(b) for b in grid})
