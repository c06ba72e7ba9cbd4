"""Optimal task execution order under precedence and conditional constraints.

An order is a permutation of task indices.  Its fitness is the sum of
switching costs between consecutive tasks (plus the closing edge for a tour),
where a switch covered by a conditional constraint is weighted by the
probability that the dependent task actually runs.
"""

from __future__ import annotations

import enum
import itertools
import logging
import warnings
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ConstraintError, InputError, PrecedenceCycleError

__all__ = [
    "DEFAULT_EXACT_CAP",
    "GaParams",
    "Objective",
    "OrderingProblem",
    "OrderingSolution",
    "fitness",
    "hamiltonian_reduction",
    "precedence_feasible",
    "solve",
    "solve_exact",
    "solve_ga",
]

log = logging.getLogger(__name__)

DEFAULT_EXACT_CAP = 11


class Objective(str, enum.Enum):
    OPEN_PATH = "path"
    CLOSED_TOUR = "tour"


class ConditionalWarning(UserWarning):
    """A conditional constraint is not backed by a precedence constraint."""


@dataclass(frozen=True)
class OrderingProblem:
    """Cost matrix plus constraints.

    ``precedence`` holds pairs ``(i, j)``: ``i`` must run before ``j``.
    ``conditional`` maps ``(i, j)`` to the probability that ``j`` runs after
    ``i``; it only reweights the switching cost ``i -> j``.
    """

    costs: np.ndarray
    precedence: frozenset = frozenset()
    conditional: Mapping = field(default_factory=dict)
    objective: Objective = Objective.OPEN_PATH
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    pred_masks: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.costs, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] < 1:
            raise InputError(f"cost matrix must be square and nonempty, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InputError("cost matrix entries must be finite")
        n = c.shape[0]
        c.setflags(write=False)
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "objective", Objective(self.objective))

        prec = frozenset((int(i), int(j)) for i, j in self.precedence)
        for i, j in prec:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise InputError(f"bad precedence pair ({i}, {j}) for {n} tasks")
        object.__setattr__(self, "precedence", prec)
        _check_acyclic(n, prec)

        cond = {}
        for (i, j), p in dict(self.conditional).items():
            i, j, p = int(i), int(j), float(p)
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise InputError(f"bad conditional pair ({i}, {j}) for {n} tasks")
            if not 0.0 <= p <= 1.0:
                raise InputError(f"conditional probability {p} for ({i}, {j}) is outside [0, 1]")
            if (i, j) not in prec:
                warnings.warn(
                    f"conditional pair ({i}, {j}) has no matching precedence constraint",
                    ConditionalWarning,
                    stacklevel=3,
                )
            cond[(i, j)] = p
        object.__setattr__(self, "conditional", cond)

        w = c.copy()
        for (i, j), p in cond.items():
            w[i, j] = p * c[i, j]
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        masks = [0] * n
        for i, j in prec:
            masks[j] |= 1 << i
        object.__setattr__(self, "pred_masks", tuple(masks))

    @property
    def n(self) -> int:
        return self.costs.shape[0]

    @classmethod
    def from_matrix(cls, c, precedence: Iterable = (), conditional: Iterable | Mapping = (),
                    objective: Objective | str = Objective.OPEN_PATH) -> "OrderingProblem":
        if not isinstance(conditional, Mapping):
            conditional = {(i, j): p for i, j, p in conditional}
        return cls(np.asarray(c), frozenset(map(tuple, precedence)), conditional, Objective(objective))


def _check_acyclic(n: int, precedence: Iterable[tuple[int, int]]) -> None:
    sorter = TopologicalSorter({j: set() for j in range(n)})
    for i, j in precedence:
        sorter.add(j, i)
    try:
        sorter.prepare()
    except CycleError as exc:
        raise PrecedenceCycleError(exc.args[1]) from None


@dataclass(frozen=True)
class OrderingSolution:
    order: tuple[int, ...]
    fitness: float
    solver: str
    generations: int = 0
    seed: int | None = None
    objective: Objective = Objective.OPEN_PATH

    def to_dict(self) -> dict:
        return {
            "schema": "mtplan.ordering/1",
            "order": list(self.order),
            "fitness": self.fitness,
            "solver": self.solver,
            "objective": self.objective.value,
            "seed": self.seed,
            "generations": self.generations,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OrderingSolution":
        try:
            return cls(
                tuple(int(t) for t in doc["order"]),
                float(doc["fitness"]),
                str(doc["solver"]),
                int(doc.get("generations", 0)),
                doc.get("seed"),
                Objective(doc.get("objective", "path")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad ordering document: {exc}") from exc


def _check_permutation(problem: OrderingProblem, order: Sequence[int]) -> tuple[int, ...]:
    order = tuple(int(t) for t in order)
    if sorted(order) != list(range(problem.n)):
        raise InputError(f"order {list(order)} is not a permutation of 0..{problem.n - 1}")
    return order


def precedence_feasible(problem: OrderingProblem, order: Sequence[int]) -> bool:
    order = _check_permutation(problem, order)
    position = {t: k for k, t in enumerate(order)}
    return all(position[i] < position[j] for i, j in problem.precedence)


def fitness(problem: OrderingProblem, order: Sequence[int]) -> float:
    """Total (expected) switching cost of running the tasks in ``order``."""
    order = _check_permutation(problem, order)
    if not precedence_feasible(problem, order):
        raise ConstraintError(f"order {list(order)} violates a precedence constraint")
    w = problem.weights
    total = 0.0
    for a, b in zip(order, order[1:]):
        total += float(w[a, b])
    if problem.objective is Objective.CLOSED_TOUR and problem.n > 1:
        total += float(w[order[-1], order[0]])
    return total


# ---------------------------------------------------------------------------
# exact search


def _solve_enumerate(problem: OrderingProblem) -> OrderingSolution:
    best_order, best = None, np.inf
    for perm in itertools.permutations(range(problem.n)):
        if not precedence_feasible(problem, perm):
            continue
        f = fitness(problem, perm)
        if f < best:
            best_order, best = perm, f
    if best_order is None:
        raise ConstraintError("no order satisfies the precedence constraints")
    return OrderingSolution(best_order, best, "exact", objective=problem.objective)


def _completion_table(problem: OrderingProblem, first: int | None) -> np.ndarray:
    """``h[mask, last]``: cheapest way to finish after visiting ``mask``, ending at ``last``.

    Levels of equal popcount are processed from the full set downwards; each
    level is vectorized over masks and candidate predecessors.
    """
    n = problem.n
    w = problem.weights
    full = (1 << n) - 1
    h = np.full((1 << n, n), np.inf)
    if first is None:
        h[full, :] = 0.0
    else:
        h[full, :] = w[:, first]
    masks = np.arange(1 << n, dtype=np.int64)
    popcount = np.zeros(1 << n, dtype=np.int64)
    for t in range(n):
        popcount += (masks >> t) & 1
    pred = np.asarray(problem.pred_masks, dtype=np.int64)
    for size in range(n - 1, 0, -1):
        level = masks[popcount == size]
        best = np.full((level.size, n), np.inf)
        for u in range(n):
            bit = 1 << u
            ok = ((level & bit) == 0) & ((level & pred[u]) == pred[u])
            if not ok.any():
                continue
            sub = level[ok]
            cand = w[:, u][None, :] + h[sub | bit, u][:, None]
            best[ok] = np.minimum(best[ok], cand)
        h[level] = best
    return h


def _reconstruct(problem: OrderingProblem, h: np.ndarray, first: int) -> tuple[int, ...]:
    n = problem.n
    w = problem.weights
    pred = problem.pred_masks
    order = [first]
    mask = 1 << first
    while len(order) < n:
        last = order[-1]
        target = h[mask, last]
        for u in range(n):
            bit = 1 << u
            if mask & bit or (mask & pred[u]) != pred[u]:
                continue
            if w[last, u] + h[mask | bit, u] == target:
                order.append(u)
                mask |= bit
                break
        else:  # pragma: no cover - table and reconstruction use identical arithmetic
            raise RuntimeError("exact solver table is inconsistent")
    return tuple(order)


def _solve_dp(problem: OrderingProblem) -> OrderingSolution:
    n = problem.n
    starts = [t for t in range(n) if problem.pred_masks[t] == 0]
    if not starts:
        raise ConstraintError("no task can run first")
    best_order, best = None, np.inf
    if problem.objective is Objective.OPEN_PATH:
        h = _completion_table(problem, None)
        for v in starts:
            if h[1 << v, v] < best:
                best, best_order = h[1 << v, v], _reconstruct(problem, h, v)
    else:
        if not problem.precedence:
            # every tour can be rotated to start at task 0, the smallest start
            starts = starts[:1]
        for v in starts:
            h = _completion_table(problem, v)
            if h[1 << v, v] < best:
                best, best_order = h[1 << v, v], _reconstruct(problem, h, v)
    if best_order is None or not np.isfinite(best):
        raise ConstraintError("no order satisfies the precedence constraints")
    return OrderingSolution(best_order, fitness(problem, best_order), "exact",
                            objective=problem.objective)


def solve_exact(problem: OrderingProblem, *, cap: int | None = DEFAULT_EXACT_CAP,
                method: str = "dp") -> OrderingSolution:
    """Globally optimal order; ties go to the lexicographically smallest order.

    ``method="enumerate"`` scores every feasible permutation directly;
    ``method="dp"`` (default) finds the same order with a subset table.
    """
    if cap is not None and problem.n > cap:
        raise CapacityError(f"exact solver is capped at {cap} tasks, problem has {problem.n}")
    if problem.n == 1:
        return OrderingSolution((0,), 0.0, "exact", objective=problem.objective)
    if method == "dp":
        return _solve_dp(problem)
    if method == "enumerate":
        return _solve_enumerate(problem)
    raise InputError(f"unknown exact method {method!r}")


# ---------------------------------------------------------------------------
# genetic algorithm

INVALID_POLICIES = ("discard", "repair")


@dataclass(frozen=True)
class GaParams:
    population_size: int = 200
    elite_pairs: int = 20
    max_stagnant_generations: int = 200
    rng_seed: int = 0
    invalid_policy: str = "repair"
    max_restarts: int = 5

    def __post_init__(self):
        if self.elite_pairs < 1 or self.population_size < 2 * self.elite_pairs:
            raise InputError("need population_size >= 2 * elite_pairs >= 2")
        if self.max_stagnant_generations < 1:
            raise InputError("max_stagnant_generations must be positive")
        if self.invalid_policy not in INVALID_POLICIES:
            raise InputError(f"invalid_policy must be one of {INVALID_POLICIES}")
        if self.max_restarts < 0:
            raise InputError("max_restarts must be nonnegative")


class _Population:
    """Vectorized fitness and feasibility over a matrix of candidate orders."""

    def __init__(self, problem: OrderingProblem):
        self.problem = problem
        self.w = problem.weights
        self.tour = problem.objective is Objective.CLOSED_TOUR
        prec = sorted(problem.precedence)
        self.before = np.array([i for i, _ in prec], dtype=np.intp)
        self.after = np.array([j for _, j in prec], dtype=np.intp)
        n = problem.n
        self.pred = np.zeros((n, n), dtype=bool)
        self.pred[self.after, self.before] = True

    def fitness(self, pop: np.ndarray) -> np.ndarray:
        f = self.w[pop[:, :-1], pop[:, 1:]].sum(axis=1)
        if self.tour:
            f = f + self.w[pop[:, -1], pop[:, 0]]
        return f

    def valid(self, pop: np.ndarray) -> np.ndarray:
        n = pop.shape[1]
        ok = (np.sort(pop, axis=1) == np.arange(n)).all(axis=1)
        if self.before.size and ok.any():
            pos = np.argsort(pop, axis=1)
            ok &= (pos[:, self.before] < pos[:, self.after]).all(axis=1)
        return ok

    def restore_precedence(self, pop: np.ndarray) -> np.ndarray:
        """Stable topological re-sort of each row.

        Repeatedly emits, among tasks whose predecessors are all placed, the
        one appearing earliest in the row.  Feasible rows come back unchanged.
        """
        if not self.before.size:
            return pop
        count, n = pop.shape
        rows = np.arange(count)
        pos = np.argsort(pop, axis=1)
        placed = np.zeros((count, n), dtype=bool)
        out = np.empty_like(pop)
        for step in range(n):
            blocked = (self.pred[None, :, :] & ~placed[:, None, :]).any(axis=2)
            key = np.where(placed | blocked, n, pos)
            pick = key.argmin(axis=1)
            out[:, step] = pick
            placed[rows, pick] = True
        return out

    def random_feasible(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Uniformly shuffled topological orders of the precedence relation."""
        n = self.problem.n
        pred = self.problem.pred_masks
        out = np.empty((count, n), dtype=np.intp)
        for row in range(count):
            placed, mask = [], 0
            remaining = list(range(n))
            while remaining:
                ready = [t for t in remaining if (mask & pred[t]) == pred[t]]
                t = ready[rng.integers(len(ready))]
                remaining.remove(t)
                placed.append(t)
                mask |= 1 << t
            out[row] = placed
        return out


def _crossover(a: np.ndarray, b: np.ndarray, k: np.ndarray, repair: bool) -> np.ndarray:
    """Swap the first ``k`` genes of each parent pair.

    With ``repair`` each child keeps the donor prefix and takes the remaining
    tasks in the order they appear in its own parent, so it stays a permutation.
    """
    n = a.shape[1]
    cols = np.arange(n)[None, :]
    head = cols < k[:, None]
    if not repair:
        c1 = np.where(head, b, a)
        c2 = np.where(head, a, b)
        return np.concatenate([c1, c2])
    own = np.concatenate([a, b])
    donor = np.concatenate([b, a])
    k = np.concatenate([k, k])[:, None]
    rows = np.arange(own.shape[0])[:, None]
    in_prefix = cols < k
    taken = np.zeros(own.shape, dtype=bool)
    # k >= 1, so padding with the donor's first gene marks nothing extra
    taken[rows, np.where(in_prefix, donor, donor[:, :1])] = True
    # stable sort moves the tasks not taken from the donor to the front, in order
    rest = np.take_along_axis(own, np.argsort(taken[rows, own], axis=1, kind="stable"), axis=1)
    shifted = np.take_along_axis(rest, np.clip(cols - k, 0, None), axis=1)
    return np.where(in_prefix, donor, shifted)


def _mutate(children: np.ndarray, rng: np.random.Generator) -> None:
    n = children.shape[1]
    rows = np.arange(children.shape[0])
    m1 = rng.integers(n, size=rows.size)
    m2 = rng.integers(n, size=rows.size)
    first = children[rows, m1].copy()
    children[rows, m1] = children[rows, m2]
    children[rows, m2] = first


def _survivors(pop: np.ndarray, fit: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Best ``size`` distinct individuals; ties broken by the order itself."""
    pop, idx = np.unique(pop, axis=0, return_index=True)
    fit = fit[idx]
    # np.unique sorts rows lexicographically, so a stable sort on fitness
    # leaves equal-fitness orders in lexicographic order.
    keep = np.argsort(fit, kind="stable")[:size]
    return pop[keep], fit[keep]


def _run_ga(pool: _Population, params: GaParams, rng: np.random.Generator):
    n = pool.problem.n
    pop = pool.random_feasible(rng, params.population_size)
    pop, fit = _survivors(pop, pool.fitness(pop), params.population_size)
    best_fit, best = fit[0], pop[0].copy()
    stagnant = generations = 0
    repair = params.invalid_policy == "repair"
    while stagnant < params.max_stagnant_generations:
        generations += 1
        elite = pop[: 2 * params.elite_pairs]
        elite = elite[rng.permutation(elite.shape[0])]
        pairs = elite.shape[0] // 2
        if pairs == 0:
            # a single distinct feasible order: nothing left to recombine
            break
        a, b = elite[0:2 * pairs:2], elite[1:2 * pairs:2]
        k = rng.integers(1, n + 1, size=pairs)
        children = _crossover(a, b, k, repair)
        _mutate(children, rng)
        if repair:
            children = pool.restore_precedence(children)
        children = children[pool.valid(children)]
        if children.size:
            merged = np.concatenate([pop, children])
            pop, fit = _survivors(merged, np.concatenate([fit, pool.fitness(children)]),
                                  params.population_size)
        if fit[0] < best_fit:
            best_fit, best = fit[0], pop[0].copy()
            stagnant = 0
        else:
            stagnant += 1
    return best, best_fit, generations


def solve_ga(problem: OrderingProblem, params: GaParams | None = None) -> OrderingSolution:
    """Genetic search over orders; reproducible for a fixed ``params.rng_seed``.

    Each generation pairs off the best ``2K`` distinct individuals, swaps a
    random-length prefix between partners and swaps two random genes in every
    child.  Under the default ``"repair"`` policy the crossover keeps children
    as permutations and a stable topological re-sort restores precedence;
    under ``"discard"`` invalid or infeasible children are dropped.  A run ends when
    the best fitness has not improved for ``max_stagnant_generations``;
    ``max_restarts`` further runs from fresh populations follow and the best
    order over all runs is returned.
    """
    params = params or GaParams()
    if problem.n < 2:
        raise InputError("the genetic solver needs at least two tasks")
    pool = _Population(problem)
    rng = np.random.default_rng(params.rng_seed)
    best, best_fit, total_generations = None, np.inf, 0
    for run in range(params.max_restarts + 1):
        order, f, generations = _run_ga(pool, params, rng)
        total_generations += generations
        log.debug("GA run %d: fitness %s after %d generations", run, f, generations)
        if f < best_fit or (f == best_fit and tuple(order) < tuple(best)):
            best, best_fit = order, f
    order = tuple(int(t) for t in best)
    return OrderingSolution(order, fitness(problem, order), "genetic", total_generations,
                            params.rng_seed, problem.objective)


def solve(problem: OrderingProblem, solver: str = "auto", *, exact_cap: int = DEFAULT_EXACT_CAP,
          ga_params: GaParams | None = None) -> OrderingSolution:
    """Dispatch to the exact solver for small problems and the GA otherwise."""
    if solver == "auto":
        solver = "exact" if problem.n <= exact_cap else "ga"
        if solver == "ga":
            log.info("n=%d exceeds the exact cap %d; running the GA with seed %s",
                     problem.n, exact_cap, (ga_params or GaParams()).rng_seed)
    if solver == "exact":
        return solve_exact(problem, cap=exact_cap)
    if solver == "ga":
        if problem.n == 1:
            return OrderingSolution((0,), 0.0, "genetic", objective=problem.objective)
        return solve_ga(problem, ga_params)
    raise InputError(f"unknown solver {solver!r}")


# ---------------------------------------------------------------------------


def hamiltonian_reduction(n: int, edges: Iterable[tuple[int, int]]) -> OrderingProblem:
    """Tour problem whose optimum is 0 exactly when the graph has a Hamiltonian cycle.

    Switching between adjacent vertices costs 0, every other switch costs 1.
    """
    if n < 3:
        raise InputError("Hamiltonian cycles need at least three vertices")
    c = np.ones((n, n))
    np.fill_diagonal(c, 0.0)
    for u, v in edges:
        if u == v:
            raise InputError("simple graphs have no self loops")
        c[u, v] = c[v, u] = 0.0
    return OrderingProblem(c, objective=Objective.CLOSED_TOUR)
