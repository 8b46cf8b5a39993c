import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sspolya.dyadic import (
    CountTree,
    DyadicTree,
    NodeIndex,
    count_data,
    interval_of,
    leaf_index,
    truncation_level,
    validate_unit_data,
)


class TestTruncationLevel:
    @pytest.mark.parametrize("n, L", [(1, 0), (2, 1), (1024, 5), (800, 5), (799, 4)])
    def test_known_values(self, n, L):
        assert truncation_level(n) == L

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            truncation_level(0)

    def test_monotone(self):
        levels = [truncation_level(n) for n in range(1, 5000)]
        assert all(a <= b for a, b in zip(levels, levels[1:]))

    @given(st.integers(min_value=2, max_value=10**7))
    def test_bracket(self, n):
        L = truncation_level(n)
        assert 2**L * L * L <= n
        assert n < 2 ** (L + 1) * (L + 1) ** 2 or L == int(math.floor(math.log2(n)))


class TestNodeIndex:
    def test_word_round_trip(self):
        node = NodeIndex(3, 5)
        assert node.word == "101"
        assert NodeIndex.from_word("101") == node
        assert NodeIndex.from_word("") == NodeIndex(0, 0)

    def test_family(self):
        node = NodeIndex(2, 3)
        left, right = node.children()
        assert (left, right) == (NodeIndex(3, 6), NodeIndex(3, 7))
        assert left.parent() == node

    @pytest.mark.parametrize(
        "node, bounds",
        [((0, 0), (0.0, 1.0)), ((1, 1), (0.5, 1.0)), ((3, 5), (0.625, 0.75))],
    )
    def test_interval(self, node, bounds):
        assert interval_of(NodeIndex(*node)) == bounds

    def test_bad_position(self):
        with pytest.raises(ValueError):
            NodeIndex(2, 4)


class TestCountData:
    def test_two_points(self):
        c = count_data([0.3, 0.7], 1)
        assert c.total == 2
        assert list(c.levels[1]) == [1, 1]

    def test_boundary_goes_left(self):
        assert list(count_data([0.5], 1).levels[1]) == [1, 0]

    def test_leaves(self):
        assert list(count_data([0.1, 0.6, 0.9, 0.95], 2).leaves) == [1, 0, 1, 2]

    def test_one_is_last_leaf(self):
        assert count_data([1.0], 3).leaves[-1] == 1

    @pytest.mark.parametrize("bad", [0.0, -0.1, 1.0000001, np.nan])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError, match="observation 1"):
            count_data([0.5, bad], 2)

    def test_children_counts(self):
        c = count_data([0.1, 0.2, 0.3, 0.8], 2)
        left, right = c.children_counts(0)
        assert (left[0], right[0]) == (3, 1)

    @settings(max_examples=40)
    @given(
        st.lists(st.floats(min_value=1e-9, max_value=1.0), min_size=1, max_size=200),
        st.integers(min_value=0, max_value=12),
    )
    def test_parent_sums(self, xs, L):
        c = count_data(xs, L)
        assert isinstance(c, CountTree)
        for l in range(L):
            np.testing.assert_array_equal(c.levels[l], c.levels[l + 1][0::2] + c.levels[l + 1][1::2])
        # partition: each point sits in exactly one node per level
        assert all(c.levels[l].sum() == len(xs) for l in range(L + 1))

    def test_leaf_index_matches_intervals(self):
        rng = np.random.default_rng(0)
        x = 1.0 - rng.random(500)
        idx = leaf_index(x, 6)
        lo, hi = idx / 64, (idx + 1) / 64
        assert np.all((lo < x) & (x <= hi))


class TestDyadicTree:
    def test_from_leaves_sums(self):
        t = DyadicTree.from_leaves([1, 2, 3, 4])
        assert t.depth == 2
        assert list(t.levels[0]) == [10]
        assert list(t.levels[1]) == [3, 7]

    def test_read_only(self):
        t = DyadicTree.from_leaves([1.0, 2.0])
        with pytest.raises(ValueError):
            t.levels[1][0] = 5.0

    def test_validate_unit_data_flattens(self):
        assert validate_unit_data([[0.2, 0.4]]).shape == (2,)
