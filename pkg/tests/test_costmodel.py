import itertools

import numpy as np
import pytest

from mtplan.costmodel import (
    CostMatrix,
    cost_matrix,
    path_cost,
    switching_cost,
    total_execution_cost,
)
from mtplan.errors import InputError
from mtplan.ordering import OrderingProblem, fitness
from mtplan.taskgraph import BlockCostProfile, BranchPointConfig, TaskGraph, enumerate_task_graphs

CFG = BranchPointConfig((1, 2, 3), 5)
UNIT = BlockCostProfile.uniform(5)
MIXED = TaskGraph(5, [[[0, 1, 2], [3, 4]], [[0, 1], [2], [3, 4]], [[0], [1], [2], [3], [4]]])


def path_set(graph, task):
    """Blocks on a task's path as (segment, group) labels."""
    labels = {(0, tuple(range(graph.n)))}
    for d in range(graph.d):
        labels.add((d + 1, graph.group_of(d, task)))
    labels.add((graph.d + 1, (task,)))
    return labels


def oracle_switch(graph, cfg, costs, i, j):
    spans = cfg.segment_layers()
    total = 0.0
    for segment, _ in path_set(graph, j) - path_set(graph, i):
        lo, hi = spans[segment]
        total += sum(costs.exec_cost[lo:hi]) + sum(costs.load_cost[lo:hi])
    return total


class TestCostMatrix:
    def test_validation(self):
        with pytest.raises(InputError):
            CostMatrix(np.ones((2, 3)))
        with pytest.raises(InputError):
            CostMatrix(np.ones((2, 2)))
        with pytest.raises(InputError):
            CostMatrix(np.zeros((2, 2)), unit="joules")

    def test_read_only(self):
        m = CostMatrix(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.c[0, 1] = 3


class TestSwitchingCost:
    def test_same_groups_everywhere(self):
        g = TaskGraph.fully_shared(3, 3)
        # only j's head block (one layer, load + exec) differs
        assert switching_cost(g, CFG, UNIT, 0, 1) == 2.0

    def test_diverging_at_trunk(self):
        g = TaskGraph(2, [[[0], [1]], [[0], [1]], [[0], [1]]])
        trunk = 2.0
        assert switching_cost(g, CFG, UNIT, 0, 1) == path_cost(g, CFG, UNIT, 1) - trunk

    def test_unit_cost_oracle(self):
        for i, j in itertools.permutations(range(5), 2):
            assert switching_cost(MIXED, CFG, UNIT, i, j) == oracle_switch(MIXED, CFG, UNIT, i, j)

    def test_same_task(self):
        with pytest.raises(InputError):
            switching_cost(MIXED, CFG, UNIT, 1, 1)


class TestCostMatrixDerivation:
    def test_fully_shared(self):
        c = cost_matrix(TaskGraph.fully_shared(4, 3), CFG, UNIT).c
        off = c[~np.eye(4, dtype=bool)]
        assert np.all(off == off[0])

    def test_all_singletons(self):
        g = TaskGraph.all_singletons(4, 3)
        c = cost_matrix(g, CFG, UNIT).c
        off = c[~np.eye(4, dtype=bool)]
        np.testing.assert_array_equal(off, path_cost(g, CFG, UNIT, 0) - 2.0)

    def test_entrywise_oracle_random_costs(self, rng):
        costs = BlockCostProfile(rng.uniform(0, 5, 5), rng.uniform(0, 5, 5), np.ones(5))
        m = cost_matrix(MIXED, CFG, costs)
        assert m.is_symmetric()
        for i, j in itertools.permutations(range(5), 2):
            assert m.c[i, j] == pytest.approx(oracle_switch(MIXED, CFG, costs, i, j))

    def test_switch_never_exceeds_full_path(self, rng):
        costs = BlockCostProfile(rng.uniform(0, 5, 5), rng.uniform(0, 5, 5), np.ones(5))
        for g in enumerate_task_graphs(4, 3):
            c = cost_matrix(g, CFG, costs).c
            for j in range(4):
                assert c[:, j].max() <= path_cost(g, CFG, costs, j) + 1e-12

    def test_unit_tag(self):
        costs = BlockCostProfile.uniform(5, unit="energy")
        assert cost_matrix(MIXED, CFG, costs).unit == "energy"


class TestTotalExecutionCost:
    def test_single_task(self):
        g = TaskGraph(1, [[[0]], [[0]], [[0]]])
        assert total_execution_cost(g, CFG, UNIT, [0]) == path_cost(g, CFG, UNIT, 0) == 10.0

    def test_difference_matches_fitness(self):
        c = cost_matrix(MIXED, CFG, UNIT).c
        problem = OrderingProblem(c)
        a, b = (0, 1, 2, 3, 4), (4, 2, 0, 3, 1)
        diff = total_execution_cost(MIXED, CFG, UNIT, a) - total_execution_cost(MIXED, CFG, UNIT, b)
        assert diff == pytest.approx(fitness(problem, a) - fitness(problem, b))

    def test_zero_probability_switches(self):
        order = [2, 0, 1, 3, 4]
        cond = {(a, b): 0.0 for a, b in zip(order, order[1:])}
        assert total_execution_cost(MIXED, CFG, UNIT, order, cond) == path_cost(MIXED, CFG, UNIT, 2)

    def test_not_a_permutation(self):
        with pytest.raises(InputError):
            total_execution_cost(MIXED, CFG, UNIT, [0, 1, 2, 3, 3])
