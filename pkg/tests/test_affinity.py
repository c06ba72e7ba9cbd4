import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtplan.affinity import (
    AffinityTensor,
    DegenerateDataWarning,
    DissimilarityProfile,
    RepresentationProfile,
    affinity_from_dissimilarity,
    affinity_tensor,
    dissimilarity_profile,
    pearson_dissimilarity,
    spearman,
)
from mtplan.errors import DegenerateInputError, InputError

from conftest import random_profiles


def textbook_r(x, y):
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxy = sum(a * b for a, b in zip(x, y))
    sxx, syy = sum(a * a for a in x), sum(b * b for b in y)
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def average_ranks(v):
    order = sorted(range(len(v)), key=lambda i: v[i])
    ranks = [0.0] * len(v)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def oracle_spearman(u, v):
    return textbook_r(average_ranks(list(u)), average_ranks(list(v)))


def upper_pairs(m):
    k = m.shape[0]
    return [m[a, b] for a in range(k) for b in range(a + 1, k)]


def oracle_dissimilarity(profile):
    out = []
    for rows in profile.branch_outputs:
        k = rows.shape[0]
        for a in range(k):
            for b in range(k):
                out.append(1 - textbook_r(list(rows[a]), list(rows[b])))
    return np.array(out)


class TestPearsonDissimilarity:
    @pytest.mark.parametrize(
        "x, y, expected",
        [([1, 2, 3], [2, 4, 6], 0.0), ([1, 2, 3], [3, 2, 1], 2.0)],
    )
    def test_perfect_correlation(self, x, y, expected):
        assert pearson_dissimilarity(x, y) == pytest.approx(expected, abs=1e-12)

    def test_textbook_formula(self):
        x, y = [1, 2, 3, 4], [1, 3, 2, 4]
        assert pearson_dissimilarity(x, y) == pytest.approx(1 - textbook_r(x, y), abs=1e-12)
        assert pearson_dissimilarity(x, y) == pytest.approx(0.2)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            pearson_dissimilarity([1, 2, 3], [1, 2])

    def test_too_short(self):
        with pytest.raises(InputError):
            pearson_dissimilarity([1], [2])

    def test_one_constant_vector(self):
        with pytest.warns(DegenerateDataWarning):
            assert pearson_dissimilarity([1, 1, 1], [1, 2, 3]) == 1.0

    def test_both_constant(self):
        with pytest.warns(DegenerateDataWarning):
            assert pearson_dissimilarity([2, 2, 2], [5, 5, 5]) == 0.0

    def test_strict_mode_raises(self):
        with pytest.raises(DegenerateInputError):
            pearson_dissimilarity([1, 1, 1], [1, 2, 3], strict=True)

    @settings(max_examples=60, deadline=None)
    @given(
        arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)),
        arrays(np.float64, 6, elements=st.floats(-1e3, 1e3)),
    )
    def test_range_and_symmetry(self, x, y):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateDataWarning)
            d = pearson_dissimilarity(x, y)
            assert -1e-9 <= d <= 2 + 1e-9
            assert d == pytest.approx(pearson_dissimilarity(y, x), abs=1e-12)


class TestSpearman:
    def test_identical_rank_order(self):
        assert spearman([1, 5, 9], [2, 6, 10]) == pytest.approx(1.0)

    def test_reversed_rank_order(self):
        assert spearman([1, 5, 9], [10, 6, 2]) == pytest.approx(-1.0)

    def test_ties_use_average_ranks(self):
        u, v = [1, 2, 3, 3], [1, 3, 2, 2]
        assert spearman(u, v) == pytest.approx(oracle_spearman(u, v), abs=1e-12)

    def test_constant_input_is_strict_by_default(self):
        with pytest.raises(DegenerateInputError):
            spearman([1, 1, 1], [1, 2, 3])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 5), min_size=5, max_size=5),
           st.lists(st.integers(0, 5), min_size=5, max_size=5))
    def test_matches_oracle_with_ties(self, u, v):
        if len(set(u)) == 1 or len(set(v)) == 1:
            return
        assert spearman(u, v) == pytest.approx(oracle_spearman(u, v), abs=1e-12)


class TestRepresentationProfile:
    def test_needs_two_samples(self):
        with pytest.raises(InputError):
            RepresentationProfile("a", (np.ones((1, 3)),))

    def test_sample_count_must_agree(self):
        with pytest.raises(InputError):
            RepresentationProfile("a", (np.ones((3, 2)), np.ones((4, 2))))

    def test_vector_branch_is_one_feature(self):
        p = RepresentationProfile("a", ([1.0, 2.0, 3.0],))
        assert p.feature_dims == (1,)


class TestDissimilarityProfile:
    def test_affine_copies_are_identical(self):
        row = np.array([0.3, -1.0, 2.0, 0.5])
        rows = np.stack([row, 2 * row + 1, 0.5 * row - 3])
        dp = dissimilarity_profile(RepresentationProfile("a", (rows, rows * 3)))
        np.testing.assert_allclose(dp.tensor, 0.0, atol=1e-12)

    def test_two_reversed_rows(self):
        dp = dissimilarity_profile(RepresentationProfile("a", (np.array([[1, 2, 3], [3, 2, 1]]),)))
        np.testing.assert_allclose(dp.tensor, [0, 2, 2, 0], atol=1e-12)

    def test_matches_nested_loop_oracle(self):
        rng = np.random.default_rng(7)
        for p in random_profiles(rng, 3, d=2, k=4, f=5):
            dp = dissimilarity_profile(p)
            assert dp.tensor.shape == (2 * 4 * 4,)
            np.testing.assert_allclose(dp.tensor, oracle_dissimilarity(p), atol=1e-12)

    def test_slice_is_symmetric_with_zero_diagonal(self, rng):
        p = random_profiles(rng, 1, d=3, k=6, f=4)[0]
        dp = dissimilarity_profile(p)
        for rho in range(3):
            m = dp.branch_slice(rho)
            np.testing.assert_array_equal(m, m.T)
            np.testing.assert_array_equal(np.diag(m), 0.0)

    def test_single_feature_rejected(self):
        with pytest.raises(InputError):
            dissimilarity_profile(RepresentationProfile("a", (np.ones((3, 1)),)))


class TestAffinityTensor:
    def test_identical_tasks(self, rng):
        p = random_profiles(rng, 1, d=2)[0]
        twin = RepresentationProfile("twin", p.branch_outputs)
        scores = affinity_tensor([p, twin]).scores
        np.testing.assert_allclose(scores[:, 0, 1], 1.0)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(11)
        profiles = random_profiles(rng, 3, d=2, k=4, f=5)
        tensor = affinity_tensor(profiles)
        slices = [dissimilarity_profile(p) for p in profiles]
        for rho in range(2):
            for i in range(3):
                for j in range(3):
                    expected = oracle_spearman(
                        upper_pairs(slices[i].branch_slice(rho)),
                        upper_pairs(slices[j].branch_slice(rho)),
                    )
                    assert tensor.scores[rho, i, j] == pytest.approx(expected, abs=1e-12)

    def test_rank_reversal_gives_minus_one(self):
        rows = np.array([[0, 1, 2, 3], [0, 1, 3, 2], [3, 0, 1, 2]], dtype=float)
        a = RepresentationProfile("a", (rows,))
        # relabelling samples 0 <-> 2 reverses the order of the three pair dissimilarities
        b = RepresentationProfile("b", (rows[::-1],))
        da = upper_pairs(dissimilarity_profile(a).branch_slice(0))
        db = upper_pairs(dissimilarity_profile(b).branch_slice(0))
        assert da[0] < da[1] < da[2] and db[0] > db[1] > db[2]
        assert affinity_tensor([a, b]).scores[0, 0, 1] == pytest.approx(-1.0)

    def test_monotone_transform_of_a_slice(self, rng):
        dps = [dissimilarity_profile(p) for p in random_profiles(rng, 3, d=2, k=5)]
        before = affinity_from_dissimilarity(dps).scores
        bent = DissimilarityProfile("t0", np.exp(3 * dps[0].tensor) - 7, dps[0].d, dps[0].k)
        after = affinity_from_dissimilarity([bent, *dps[1:]]).scores
        np.testing.assert_allclose(after, before, atol=1e-12)

    def test_shapes_must_agree(self, rng):
        a, b = random_profiles(rng, 2, d=2, k=4, f=5)
        c = RepresentationProfile("c", (np.ones((4, 5)),))
        with pytest.raises(InputError):
            affinity_tensor([a, c])
        with pytest.raises(InputError):
            affinity_tensor([a])
        with pytest.raises(InputError):
            affinity_tensor([a, RepresentationProfile("t0", b.branch_outputs)])

    def test_document_round_trip(self, rng):
        tensor = affinity_tensor(random_profiles(rng, 3))
        back = AffinityTensor.from_dict(tensor.to_dict())
        np.testing.assert_array_equal(back.scores, tensor.scores)
        assert back.task_ids == tensor.task_ids

    def test_bad_document(self):
        with pytest.raises(InputError):
            AffinityTensor.from_dict({"scores": [[1.0]]})

    def test_constant_rows_warn_and_strict_raises(self, rng):
        a = random_profiles(rng, 1, d=1, k=3, f=4)[0]
        dead = RepresentationProfile("dead", (np.ones((3, 4)),))
        with pytest.warns(DegenerateDataWarning):
            scores = affinity_tensor([a, dead]).scores
        assert np.all(np.abs(scores) <= 1)
        with pytest.raises(DegenerateInputError):
            affinity_tensor([a, dead], strict=True)
