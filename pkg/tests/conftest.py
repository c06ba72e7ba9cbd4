import itertools

import numpy as np
import pytest

from mtplan.affinity import RepresentationProfile


def random_profiles(rng, n, d=2, k=4, f=5, noise=1.0):
    """Tasks built as noisy variations of one shared activation pattern."""
    base = [rng.normal(size=(k, f)) for _ in range(d)]
    return [
        RepresentationProfile(
            f"t{t}", tuple(b + noise * rng.normal(size=b.shape) for b in base)
        )
        for t in range(n)
    ]


def set_partitions(items):
    """All set partitions of ``items`` (independent recursive construction)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def refines(fine, coarse):
    return all(any(set(g) <= set(c) for c in coarse) for g in fine)


def canon(part):
    return tuple(sorted(tuple(sorted(g)) for g in part))


def refinement_chains(n, d):
    """Every chain P_1 >= P_2 >= ... >= P_d of set partitions of 0..n-1."""
    parts = [canon(p) for p in set_partitions(range(n))]
    chains = [(p,) for p in parts]
    for _ in range(d - 1):
        chains = [c + (p,) for c in chains for p in parts if refines(p, c[-1])]
    return set(chains)


def brute_force_order(c, precedence=(), conditional=None, tour=False):
    """Minimum cost over feasible permutations, scanned in lexicographic order."""
    n = len(c)
    conditional = conditional or {}
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(n)):
        pos = {t: k for k, t in enumerate(perm)}
        if any(pos[i] >= pos[j] for i, j in precedence):
            continue
        edges = list(zip(perm, perm[1:]))
        if tour and n > 1:
            edges.append((perm[-1], perm[0]))
        cost = sum(conditional.get(e, 1.0) * c[e[0]][e[1]] for e in edges)
        if cost < best:
            best, best_perm = cost, perm
    return best, best_perm


def random_dag(rng, n, max_edges):
    perm = rng.permutation(n)
    prec = set()
    for _ in range(int(rng.integers(0, max_edges + 1))):
        a, b = sorted(rng.choice(n, 2, replace=False))
        prec.add((int(perm[a]), int(perm[b])))
    return prec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
