import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdpmix.metrics import (
    alignment_score,
    mean_pixel_entropy,
    rand_index,
    stddev_score,
)

from oracles import rand_index_brute


class TestRandIndex:
    def test_identical(self):
        assert rand_index([1, 2, 2, 3], [1, 2, 2, 3]) == 1.0

    def test_relabeled(self):
        assert rand_index([7, 9, 9, 0], [1, 2, 2, 3]) == 1.0

    def test_known_case(self):
        # brute force over all 6 pairs: only (0,1) and (2,3) agree
        assert rand_index([1, 1, 1, 1], [1, 1, 2, 2]) == pytest.approx(2 / 6)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            pred = rng.integers(0, 4, n)
            truth = rng.integers(0, 3, n)
            assert rand_index(pred, truth) == pytest.approx(
                rand_index_brute(list(pred), list(truth))
            )

    @given(
        st.lists(st.integers(0, 3), min_size=2, max_size=10),
        st.data(),
    )
    @settings(max_examples=50, deadline=None)
    def test_symmetry_and_bounds(self, a, data):
        b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
        r = rand_index(a, b)
        assert 0.0 <= r <= 1.0
        assert r == rand_index(b, a)

    def test_one_iff_same_partition(self):
        assert rand_index([0, 1, 0], [5, 2, 5]) == 1.0
        assert rand_index([0, 1, 0], [5, 2, 2]) < 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            rand_index([1], [1])
        with pytest.raises(ValueError):
            rand_index([1, 2], [1, 2, 3])


class TestAlignmentScore:
    def test_identical_pair(self):
        sc = alignment_score([[1.0, 2.0], [1.0, 2.0]], [0, 0])
        assert sc.mean == 0.0 and sc.std == 0.0

    def test_single_pair_distance(self):
        sc = alignment_score([[0.0, 0.0], [3.0, 4.0]], [0, 0])
        assert sc.mean == pytest.approx(5.0)
        assert sc.std == 0.0 and sc.stderr == 0.0
        assert sc.pair_count == 1

    def test_pairs_within_clusters_only(self):
        items = [[0.0], [1.0], [10.0], [12.0]]
        sc = alignment_score(items, [0, 0, 1, 1])
        assert sc.pair_count == 2
        assert sc.mean == pytest.approx((1.0 + 2.0) / 2)

    def test_reorder_invariance(self):
        rng = np.random.default_rng(1)
        items = rng.normal(0, 1, (8, 3))
        z = np.array([0, 0, 0, 1, 1, 1, 1, 2])
        base = alignment_score(items, z)
        perm = rng.permutation(8)
        again = alignment_score(items[perm], z[perm])
        assert again.mean == pytest.approx(base.mean)
        assert again.std == pytest.approx(base.std)

    def test_stderr_definition(self):
        rng = np.random.default_rng(2)
        items = rng.normal(0, 1, (6, 2))
        sc = alignment_score(items, np.zeros(6, int))
        assert sc.pair_count == 15
        assert sc.stderr == pytest.approx(sc.std / math.sqrt(15))

    def test_no_valid_pair(self):
        with pytest.raises(ValueError):
            alignment_score([[1.0], [2.0]], [0, 1])


class TestPixelEntropy:
    def test_identical_images(self):
        imgs = np.tile([0.0, 1.0, 1.0, 0.0], (5, 1))
        assert mean_pixel_entropy(imgs) == 0.0

    def test_max_entropy(self):
        imgs = np.array([[0.0], [1.0], [0.0], [1.0]])
        assert mean_pixel_entropy(imgs) == pytest.approx(1.0)

    def test_quarter_probability(self):
        imgs = np.array([[1.0], [0.0], [0.0], [0.0]])
        want = -0.25 * math.log2(0.25) - 0.75 * math.log2(0.75)
        assert mean_pixel_entropy(imgs) == pytest.approx(want, abs=1e-10)
        assert want == pytest.approx(0.8113, abs=1e-4)

    def test_range_check(self):
        with pytest.raises(ValueError):
            mean_pixel_entropy(np.array([[1.2]]))

    def test_bounds(self):
        rng = np.random.default_rng(3)
        imgs = (rng.random((10, 20)) > 0.5).astype(float)
        assert 0.0 <= mean_pixel_entropy(imgs) <= 1.0


class TestStddevScore:
    def test_identical_curves(self):
        curves = np.tile(np.sin(np.linspace(0, 1, 16)), (4, 1))
        assert stddev_score(curves) == 0.0

    def test_two_constant_curves(self):
        # population std of {0, 2} is 1 at each of the T steps
        T = 7
        curves = np.stack([np.zeros(T), np.full(T, 2.0)])
        assert stddev_score(curves) == pytest.approx(float(T))

    def test_reorder_invariance(self):
        rng = np.random.default_rng(4)
        curves = rng.normal(0, 1, (6, 12))
        assert stddev_score(curves) == pytest.approx(
            stddev_score(curves[rng.permutation(6)])
        )

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            stddev_score(np.array([1.0, 2.0]))
