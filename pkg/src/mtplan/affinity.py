"""Task affinity from branch-point activations.

Each task is profiled by how dissimilar its representations of K shared
samples are to one another (1 - Pearson r between sample rows), one K x K
matrix per branch point.  Two tasks are then compared at each branch point by
the Spearman rank correlation of those matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, InputError

__all__ = [
    "AffinityTensor",
    "DegenerateDataWarning",
    "DissimilarityProfile",
    "RepresentationProfile",
    "affinity_from_dissimilarity",
    "affinity_tensor",
    "dissimilarity_profile",
    "pearson_dissimilarity",
    "spearman",
]


class DegenerateDataWarning(UserWarning):
    """A correlation fell back to its convention for constant vectors."""


@dataclass(frozen=True)
class RepresentationProfile:
    """Layer outputs of one task at D branch points for K shared samples.

    ``branch_outputs[d]`` is a K x F_d matrix; row ``a`` is the flattened
    activation produced for sample ``a``.
    """

    task_id: str
    branch_outputs: tuple[np.ndarray, ...]

    def __post_init__(self):
        outputs = []
        for d, block in enumerate(self.branch_outputs):
            arr = np.asarray(block, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2:
                raise InputError(
                    f"task {self.task_id!r}: branch {d} must be a K x F matrix, "
                    f"got shape {arr.shape}"
                )
            outputs.append(arr)
        if not outputs:
            raise InputError(f"task {self.task_id!r}: no branch outputs")
        k = outputs[0].shape[0]
        if k < 2:
            raise InputError(f"task {self.task_id!r}: need K >= 2 samples, got {k}")
        for d, arr in enumerate(outputs):
            if arr.shape[0] != k:
                raise InputError(
                    f"task {self.task_id!r}: branch {d} has {arr.shape[0]} samples, "
                    f"expected {k}"
                )
        object.__setattr__(self, "branch_outputs", tuple(outputs))

    @property
    def d(self) -> int:
        return len(self.branch_outputs)

    @property
    def k(self) -> int:
        return self.branch_outputs[0].shape[0]

    @property
    def feature_dims(self) -> tuple[int, ...]:
        return tuple(arr.shape[1] for arr in self.branch_outputs)


@dataclass(frozen=True)
class DissimilarityProfile:
    """Flattened D x K x K tensor of sample-pair dissimilarities for one task."""

    task_id: str
    tensor: np.ndarray
    d: int
    k: int

    def branch_slice(self, rho: int) -> np.ndarray:
        """The K x K dissimilarity matrix at branch point ``rho``."""
        return self.tensor.reshape(self.d, self.k, self.k)[rho]


@dataclass(frozen=True)
class AffinityTensor:
    """Pairwise task affinities ``scores[rho, i, j]`` in [-1, 1]."""

    scores: np.ndarray
    task_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 3 or scores.shape[1] != scores.shape[2]:
            raise InputError(f"affinity scores must be D x n x n, got {scores.shape}")
        object.__setattr__(self, "scores", scores)
        ids = tuple(self.task_ids) or tuple(str(i) for i in range(scores.shape[1]))
        if len(ids) != scores.shape[1]:
            raise InputError(
                f"{len(ids)} task ids given for {scores.shape[1]} tasks in affinity"
            )
        object.__setattr__(self, "task_ids", ids)

    @property
    def n(self) -> int:
        return self.scores.shape[1]

    @property
    def d(self) -> int:
        return self.scores.shape[0]

    def to_dict(self) -> dict:
        return {
            "schema": "mtplan.affinity/1",
            "n": self.n,
            "d": self.d,
            "task_ids": list(self.task_ids),
            "scores": self.scores.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AffinityTensor":
        try:
            tensor = cls(np.asarray(doc["scores"], dtype=np.float64), tuple(doc["task_ids"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad affinity document: {exc}") from exc
        if tensor.n != doc.get("n", tensor.n) or tensor.d != doc.get("d", tensor.d):
            raise InputError("affinity document header disagrees with its scores")
        return tensor


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise InputError(f"vectors differ in length: {x.size} vs {y.size}")
    if x.size < 2:
        raise InputError("correlation needs vectors of length >= 2")
    return x, y


def _degenerate_r(x_const: bool, y_const: bool, what: str, strict: bool) -> float:
    if strict:
        raise DegenerateInputError(f"{what} is undefined for a constant vector")
    warnings.warn(
        f"{what} of a constant vector; using r = {1.0 if x_const and y_const else 0.0}",
        DegenerateDataWarning,
        stacklevel=3,
    )
    return 1.0 if (x_const and y_const) else 0.0


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    r = float(xc @ yc) / float(np.sqrt((xc @ xc) * (yc @ yc)))
    return min(1.0, max(-1.0, r))


def pearson_dissimilarity(x, y, *, strict: bool = False) -> float:
    """Return ``1 - r`` where r is the Pearson correlation of ``x`` and ``y``.

    A constant input makes r undefined.  With ``strict`` set that raises
    :class:`DegenerateInputError`; otherwise r is taken as 1 when both inputs
    are constant and 0 when only one is, and a warning is emitted.
    """
    x, y = _as_pair(x, y)
    x_const, y_const = np.ptp(x) == 0, np.ptp(y) == 0
    if x_const or y_const:
        r = _degenerate_r(x_const, y_const, "Pearson correlation", strict)
    else:
        r = _pearson_r(x, y)
    return 1.0 - r


def spearman(u, v, *, strict: bool = True) -> float:
    """Spearman rank correlation with average ranks for ties."""
    u, v = _as_pair(u, v)
    u_const, v_const = np.ptp(u) == 0, np.ptp(v) == 0
    if u_const or v_const:
        return _degenerate_r(u_const, v_const, "Spearman correlation", strict)
    return _pearson_r(rankdata(u), rankdata(v))


def _row_correlations(rows: np.ndarray, what: str, strict: bool) -> np.ndarray:
    """Pearson correlation between all row pairs, exactly symmetric.

    Constant rows follow the same convention as :func:`pearson_dissimilarity`.
    """
    const = np.ptp(rows, axis=1) == 0
    centered = rows - rows.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ij,ij->i", centered, centered))
    norms[const] = 1.0
    z = centered / norms[:, None]
    r = np.clip(z @ z.T, -1.0, 1.0)
    if const.any():
        if strict:
            raise DegenerateInputError(f"{what} is undefined for a constant vector")
        warnings.warn(
            f"{what}: {int(const.sum())} constant vector(s); using r = 0 against "
            "non-constant and r = 1 between constant vectors",
            DegenerateDataWarning,
            stacklevel=3,
        )
        r[const, :] = 0.0
        r[:, const] = 0.0
        r[np.ix_(const, const)] = 1.0
    upper = np.triu(r, 1)
    r = upper + upper.T
    np.fill_diagonal(r, 1.0)
    return r


def dissimilarity_profile(
    profile: RepresentationProfile, *, strict: bool = False
) -> DissimilarityProfile:
    """Sample-pair dissimilarities at every branch point, flattened branch-major."""
    blocks = []
    for rows in profile.branch_outputs:
        if rows.shape[1] < 2:
            raise InputError(
                f"task {profile.task_id!r}: Pearson correlation needs >= 2 features "
                "per branch point"
            )
        blocks.append(1.0 - _row_correlations(rows, "Pearson correlation", strict))
    tensor = np.stack(blocks)
    return DissimilarityProfile(profile.task_id, tensor.ravel(), profile.d, profile.k)


def _check_shared_shape(profiles: Sequence[RepresentationProfile]) -> None:
    first = profiles[0]
    for p in profiles[1:]:
        if p.d != first.d or p.k != first.k or p.feature_dims != first.feature_dims:
            raise InputError(
                f"task {p.task_id!r} has D={p.d}, K={p.k}, F={p.feature_dims}; "
                f"task {first.task_id!r} has D={first.d}, K={first.k}, "
                f"F={first.feature_dims}"
            )


def affinity_from_dissimilarity(
    dprofiles: Sequence[DissimilarityProfile], *, strict: bool = False
) -> AffinityTensor:
    """Spearman affinity between every task pair at every branch point.

    Each K x K slice is symmetric with a zero diagonal, so only its
    K(K-1)/2 distinct sample pairs enter the rank correlation.
    """
    if len(dprofiles) < 2:
        raise InputError("affinity needs at least two tasks")
    d, k = dprofiles[0].d, dprofiles[0].k
    if any(dp.d != d or dp.k != k for dp in dprofiles):
        raise InputError("dissimilarity profiles differ in D or K")
    ids = [dp.task_id for dp in dprofiles]
    if len(set(ids)) != len(ids):
        raise InputError("task ids must be unique")
    rows, cols = np.triu_indices(k, 1)
    scores = np.empty((d, len(dprofiles), len(dprofiles)))
    for rho in range(d):
        pairs = np.stack([dp.branch_slice(rho)[rows, cols] for dp in dprofiles])
        ranks = rankdata(pairs, axis=1)
        scores[rho] = _row_correlations(ranks, "Spearman correlation", strict)
    return AffinityTensor(scores, tuple(ids))


def affinity_tensor(
    profiles: Sequence[RepresentationProfile], *, strict: bool = False
) -> AffinityTensor:
    """Affinity tensor straight from representation profiles."""
    if len(profiles) < 2:
        raise InputError("affinity needs at least two tasks")
    _check_shared_shape(profiles)
    return affinity_from_dissimilarity(
        [dissimilarity_profile(p, strict=strict) for p in profiles], strict=strict
    )
