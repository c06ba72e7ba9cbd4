"""Task-switching costs derived from a task graph.

Running task ``j`` right after task ``i`` reuses every block the two paths
share (weights are resident and the intermediate output is cached), so only
the blocks below their divergence point are loaded and executed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .taskgraph import Block, BlockCostProfile, BranchPointConfig, TaskGraph, blocks_of

__all__ = [
    "CostMatrix",
    "cost_matrix",
    "path_blocks",
    "path_cost",
    "switching_cost",
    "total_execution_cost",
]

UNITS = ("time", "energy")


@dataclass(frozen=True)
class CostMatrix:
    """``c[i, j]``: extra cost of running task ``j`` when ``i`` ran last."""

    c: np.ndarray
    unit: str = "time"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InputError(f"cost matrix must be square, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("cost matrix entries must be finite")
        if np.any(np.diag(c) != 0):
            raise InputError("cost matrix diagonal must be zero")
        if self.unit not in UNITS:
            raise InputError(f"unit must be one of {UNITS}, got {self.unit!r}")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.c, self.c.T))


def path_blocks(blocks: Sequence[Block], task: int) -> list[Block]:
    return [b for b in blocks if task in b.tasks]


def path_cost(graph: TaskGraph, cfg: BranchPointConfig, costs: BlockCostProfile, task: int) -> float:
    """Cost of loading and executing every block on ``task``'s path from scratch."""
    return sum(b.switch_cost for b in path_blocks(blocks_of(graph, cfg, costs), task))


def _switch(blocks: Sequence[Block], i: int, j: int) -> float:
    resident = {id(b) for b in path_blocks(blocks, i)}
    return sum(b.switch_cost for b in path_blocks(blocks, j) if id(b) not in resident)


def switching_cost(
    graph: TaskGraph, cfg: BranchPointConfig, costs: BlockCostProfile, i: int, j: int
) -> float:
    if i == j:
        raise InputError("switching cost needs two distinct tasks")
    return _switch(blocks_of(graph, cfg, costs), i, j)


def cost_matrix(graph: TaskGraph, cfg: BranchPointConfig, costs: BlockCostProfile) -> CostMatrix:
    """All pairwise switching costs; each unordered pair is computed once and mirrored."""
    blocks = blocks_of(graph, cfg, costs)
    c = np.zeros((graph.n, graph.n))
    for i in range(graph.n):
        for j in range(i + 1, graph.n):
            c[i, j] = c[j, i] = _switch(blocks, i, j)
    return CostMatrix(c, costs.unit)


def total_execution_cost(
    graph: TaskGraph,
    cfg: BranchPointConfig,
    costs: BlockCostProfile,
    order: Sequence[int],
    conditionals: Mapping[tuple[int, int], float] | None = None,
) -> float:
    """Full path cost of the first task plus every (probability-weighted) switch."""
    order = [int(t) for t in order]
    if sorted(order) != list(range(graph.n)):
        raise InputError(f"order {order} is not a permutation of 0..{graph.n - 1}")
    blocks = blocks_of(graph, cfg, costs)
    conditionals = conditionals or {}
    total = sum(b.switch_cost for b in path_blocks(blocks, order[0]))
    for a, b in zip(order, order[1:]):
        total += conditionals.get((a, b), 1.0) * _switch(blocks, a, b)
    return total
