"""Task graphs as chains of successively refining task partitions.

Tasks are numbered ``0..n-1``.  A task graph over D branch points holds D
partitions; ``partitions[d]`` decides which tasks share the network segment
that follows branch point ``d``.  Every task shares the trunk (the segment
before the first branch point) and owns a private head segment at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator

import numpy as np

from .affinity import AffinityTensor
from .errors import CapacityError, InputError

__all__ = [
    "Block",
    "BlockCostProfile",
    "BranchPointConfig",
    "DEFAULT_ENUMERATION_CAP",
    "TaskGraph",
    "blocks_of",
    "count_task_graphs",
    "enumerate_task_graphs",
    "model_size",
    "variety_at_branch",
    "variety_score",
]

DEFAULT_ENUMERATION_CAP = 10**6

Group = tuple[int, ...]
Partition = tuple[Group, ...]


def canonical_partition(groups: Iterable[Iterable[int]]) -> Partition:
    """Sort members within groups and groups by their smallest member."""
    cleaned = [tuple(sorted(g)) for g in groups]
    if any(not g for g in cleaned):
        raise InputError("partition contains an empty group")
    return tuple(sorted(cleaned, key=lambda g: g[0]))


@dataclass(frozen=True)
class TaskGraph:
    n: int
    partitions: tuple[Partition, ...]

    def __post_init__(self):
        if self.n < 1:
            raise InputError("a task graph needs at least one task")
        parts = tuple(canonical_partition(p) for p in self.partitions)
        if not parts:
            raise InputError("a task graph needs at least one branch point")
        universe = list(range(self.n))
        for d, part in enumerate(parts):
            members = sorted(t for g in part for t in g)
            if members != universe:
                raise InputError(
                    f"partitions[{d}] is not a partition of tasks 0..{self.n - 1}"
                )
        for d in range(1, len(parts)):
            parent_of = {t: gi for gi, g in enumerate(parts[d - 1]) for t in g}
            for g in parts[d]:
                if len({parent_of[t] for t in g}) != 1:
                    raise InputError(
                        f"partitions[{d}] group {list(g)} does not refine partitions[{d - 1}]"
                    )
        object.__setattr__(self, "partitions", parts)

    @property
    def d(self) -> int:
        return len(self.partitions)

    @classmethod
    def fully_shared(cls, n: int, d: int) -> "TaskGraph":
        return cls(n, (tuple([tuple(range(n))]),) * d)

    @classmethod
    def all_singletons(cls, n: int, d: int) -> "TaskGraph":
        return cls(n, (tuple((t,) for t in range(n)),) * d)

    def group_of(self, level: int, task: int) -> Group:
        for g in self.partitions[level]:
            if task in g:
                return g
        raise IndexError(task)

    def divergence_level(self, i: int, j: int) -> int:
        """First partition level where ``i`` and ``j`` sit in different groups.

        Returns ``d`` when the two tasks share every partitioned segment.
        """
        for level in range(self.d):
            if j not in self.group_of(level, i):
                return level
        return self.d

    def key(self) -> tuple:
        """Total order used for deterministic output and tie-breaking."""
        return self.partitions

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "d": self.d,
            "partitions": [[list(g) for g in part] for part in self.partitions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskGraph":
        try:
            graph = cls(int(doc["n"]), tuple(tuple(tuple(g) for g in p) for p in doc["partitions"]))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad task graph document: {exc}") from exc
        if "d" in doc and int(doc["d"]) != graph.d:
            raise InputError(f"task graph declares d={doc['d']} but has {graph.d} partitions")
        return graph


@dataclass(frozen=True)
class BranchPointConfig:
    """Where the D branch points sit in a common L-layer architecture.

    Segment boundaries are ``0, b_0, ..., b_{D-1}, L - head_layers, L``: the
    trunk covers layers ``[0, b_0)``, partitioned segment ``d`` covers
    ``[b_d, b_{d+1})`` (the last one ends where the head starts), and the
    private head covers the final ``head_layers`` layers.
    """

    layer_index_of_branch: tuple[int, ...]
    num_layers: int
    head_layers: int = 1

    def __post_init__(self):
        b = tuple(int(x) for x in self.layer_index_of_branch)
        object.__setattr__(self, "layer_index_of_branch", b)
        if not b:
            raise InputError("need at least one branch point")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise InputError(f"branch layer indices must be strictly increasing: {b}")
        if self.head_layers < 0 or b[0] < 0 or b[-1] > self.num_layers - self.head_layers:
            raise InputError(
                f"branch layers {b} do not fit {self.num_layers} layers with "
                f"{self.head_layers} head layer(s)"
            )

    @property
    def num_branch_points(self) -> int:
        return len(self.layer_index_of_branch)

    @classmethod
    def evenly_spaced(cls, d: int, num_layers: int, head_layers: int = 1) -> "BranchPointConfig":
        body = num_layers - head_layers
        if body < d + 1:
            raise InputError(
                f"{num_layers} layers cannot hold {d} branch points with a trunk and "
                f"{head_layers} head layer(s)"
            )
        cuts = np.linspace(0, body, d + 2)[1:-1]
        return cls(tuple(int(round(c)) for c in cuts), num_layers, head_layers)

    def segment_layers(self) -> list[tuple[int, int]]:
        """Half-open layer spans of trunk, the D partitioned segments, and head."""
        bounds = [0, *self.layer_index_of_branch, self.num_layers - self.head_layers, self.num_layers]
        return list(zip(bounds[:-1], bounds[1:]))


@dataclass(frozen=True)
class BlockCostProfile:
    """Per-layer costs of the common architecture, identical for every task."""

    exec_cost: tuple[float, ...]
    load_cost: tuple[float, ...]
    param_size: tuple[float, ...]
    unit: str = "time"

    def __post_init__(self):
        cols = [tuple(float(v) for v in col) for col in (self.exec_cost, self.load_cost, self.param_size)]
        if len({len(c) for c in cols}) != 1:
            raise InputError("exec_cost, load_cost and param_size must have one entry per layer")
        if any(v < 0 or not math.isfinite(v) for c in cols for v in c):
            raise InputError("layer costs must be finite and nonnegative")
        object.__setattr__(self, "exec_cost", cols[0])
        object.__setattr__(self, "load_cost", cols[1])
        object.__setattr__(self, "param_size", cols[2])

    @property
    def num_layers(self) -> int:
        return len(self.exec_cost)

    @classmethod
    def uniform(cls, num_layers: int, exec_cost=1.0, load_cost=1.0, param_size=1.0, unit="time"):
        return cls(
            (exec_cost,) * num_layers, (load_cost,) * num_layers, (param_size,) * num_layers, unit
        )


@dataclass(frozen=True)
class Block:
    segment: int
    tasks: Group
    layers: tuple[int, int]
    exec_cost: float
    load_cost: float
    param_size: float

    @property
    def switch_cost(self) -> float:
        return self.load_cost + self.exec_cost


def _check_compatible(graph: TaskGraph, cfg: BranchPointConfig, costs: BlockCostProfile) -> None:
    if cfg.num_branch_points != graph.d:
        raise InputError(
            f"graph has {graph.d} branch points but the configuration has {cfg.num_branch_points}"
        )
    if cfg.num_layers != costs.num_layers:
        raise InputError(
            f"configuration has {cfg.num_layers} layers but costs cover {costs.num_layers}"
        )


def blocks_of(graph: TaskGraph, cfg: BranchPointConfig, costs: BlockCostProfile) -> list[Block]:
    """Materialize every block: trunk, one per (segment, group), one head per task."""
    _check_compatible(graph, cfg, costs)
    spans = cfg.segment_layers()
    groupings = [(tuple(range(graph.n)),), *graph.partitions, tuple((t,) for t in range(graph.n))]
    blocks = []
    for segment, ((lo, hi), groups) in enumerate(zip(spans, groupings)):
        e = float(sum(costs.exec_cost[lo:hi]))
        ld = float(sum(costs.load_cost[lo:hi]))
        s = float(sum(costs.param_size[lo:hi]))
        for g in groups:
            blocks.append(Block(segment, g, (lo, hi), e, ld, s))
    return blocks


def model_size(graph: TaskGraph, cfg: BranchPointConfig, costs: BlockCostProfile) -> float:
    """Total parameter size with every shared block stored once."""
    return sum(b.param_size for b in blocks_of(graph, cfg, costs))


def _check_affinity(graph: TaskGraph, affinity: AffinityTensor) -> None:
    if affinity.n != graph.n:
        raise InputError(f"affinity covers {affinity.n} tasks, graph has {graph.n}")
    if affinity.d != graph.d:
        raise InputError(f"affinity has {affinity.d} branch points, graph has {graph.d}")


def variety_at_branch(graph: TaskGraph, affinity: AffinityTensor, rho: int) -> float:
    """Mean over the groups at ``rho`` of the worst pairwise dissimilarity.

    Singleton groups have no pairs and contribute 0.
    """
    _check_affinity(graph, affinity)
    if not 0 <= rho < graph.d:
        raise IndexError(f"branch index {rho} out of range for D={graph.d}")
    dissim = 1.0 - affinity.scores[rho]
    groups = graph.partitions[rho]
    total = 0.0
    for g in groups:
        if len(g) > 1:
            idx = np.asarray(g)
            sub = dissim[np.ix_(idx, idx)]
            total += float(sub[np.triu_indices(len(g), 1)].max())
    return total / len(groups)


def variety_score(graph: TaskGraph, affinity: AffinityTensor) -> float:
    return sum(variety_at_branch(graph, affinity, rho) for rho in range(graph.d))


@lru_cache(maxsize=None)
def count_task_graphs(n: int, d: int) -> int:
    """Number of distinct refinement chains of length ``d`` over ``n`` tasks."""
    if n == 0:
        return 1
    if d == 0:
        return 1
    # Partition by the block containing task 0, weighting each block by the
    # number of chains it admits one level down.
    return sum(
        math.comb(n - 1, k - 1) * count_task_graphs(k, d - 1) * count_task_graphs(n - k, d)
        for k in range(1, n + 1)
    )


def _attach(parent: TaskGraph, task: int, anchor: int, depth: int) -> TaskGraph:
    """Add ``task`` sharing ``anchor``'s groups above ``depth`` and alone below."""
    parts = []
    for level, part in enumerate(parent.partitions):
        groups = [list(g) for g in part]
        if level < depth:
            for g in groups:
                if anchor in g:
                    g.append(task)
        else:
            groups.append([task])
        parts.append(tuple(tuple(g) for g in groups))
    return TaskGraph(task + 1, tuple(parts))


def _extend(graphs: Iterator[TaskGraph], task: int) -> Iterator[TaskGraph]:
    for parent in graphs:
        seen = set()
        # depth 0 branches off the trunk root; depth d joins a leaf group
        for depth in range(parent.d + 1):
            for anchor in range(task):
                child = _attach(parent, task, anchor, depth)
                if child.partitions not in seen:
                    seen.add(child.partitions)
                    yield child


def enumerate_task_graphs(
    n: int, d: int, *, cap: int | None = DEFAULT_ENUMERATION_CAP
) -> Iterator[TaskGraph]:
    """Yield every task graph over ``n`` tasks and ``d`` branch points once.

    Graphs over ``k`` tasks are grown from graphs over ``k - 1`` tasks by
    attaching the new task below some internal node.  A child has a unique
    parent (drop the newest task), so deduplicating each parent's children
    is enough for global uniqueness.
    """
    if n < 1 or d < 1:
        raise InputError("need n >= 1 and d >= 1")
    total = count_task_graphs(n, d)
    if cap is not None and total > cap:
        raise CapacityError(
            f"{total} task graphs for n={n}, D={d} exceed the cap of {cap}; "
            "raise the cap or use fewer branch points"
        )
    stream: Iterator[TaskGraph] = iter([TaskGraph(1, (((0,),),) * d)])
    for task in range(1, n):
        stream = _extend(stream, task)
    return stream

