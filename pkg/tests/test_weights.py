import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeentropy import trees
from treeentropy import weights as W
from treeentropy.weights import WeightError


class TestAssign:
    def test_constant(self, rng):
        t = trees.random_tree(20, rng)
        ws = W.assign(t, W.constant(1), W.constant(1), 2.0)
        assert np.all(ws.alpha == 1) and np.all(ws.sigma_true == 1)

    def test_polynomial_values(self):
        t = trees.build_path(3)
        ws = W.assign(t, W.polynomial(2), W.constant(1), 2.0)
        assert ws.alpha.tolist() == [1.0, 1.0, 0.5]

    def test_sigma_increase_rejected(self):
        t = trees.build_path(3)
        with pytest.raises(WeightError, match=r"\(0, 1\)"):
            W.assign(t, W.constant(1), W.per_node([1.0, 2.0, 0.5]), 2.0)

    def test_nonpositive_rejected(self):
        t = trees.build_path(2)
        with pytest.raises(WeightError):
            W.assign(t, W.per_node([1.0, 0.0]), W.constant(1), 2.0)

    def test_sigma_normalized(self):
        t = trees.build_path(3)
        ws = W.assign(t, W.constant(1), W.per_node([4.0, 2.0, 1.0]), 2.0)
        assert ws.sigma.tolist() == [1.0, 0.5, 0.25]
        assert ws.sigma_root_scale == 4.0
        assert ws.sigma_true.tolist() == [4.0, 2.0, 1.0]

    def test_csv(self, tmp_path):
        t = trees.build_path(3)
        f = tmp_path / "w.csv"
        f.write_text("node_index,alpha,sigma\n0,1,1\n1,2,0.5\n2,3,0.5\n")
        ws = W.load_weight_csv(f, t, 2.0)
        assert ws.alpha.tolist() == [1.0, 2.0, 3.0]


class TestStatistics:
    def test_boundedness_examples(self):
        t = trees.build_path(3)
        ws = W.assign(t, W.constant(1), W.constant(1), 1.0)
        assert W.boundedness_statistic(ws, t) == 3.0
        ws = W.assign(t, W.constant(1), W.per_node([1, 1, 0.5]), 1.0)
        assert W.boundedness_statistic(ws, t) == 2.0
        one = trees.build_path(1)
        ws = W.assign(one, W.constant(0.7), W.constant(3.0), 2.0)
        assert W.boundedness_statistic(ws, one) == pytest.approx(2.1, rel=1e-15)

    def test_mazja_rosin(self):
        t = trees.build_path(2000)
        n = np.arange(2000)
        ws = W.assign(t, W.constant(1), W.per_node(1.0 / (1.0 + n)), 2.0)
        assert W.mazja_rosin_statistic(ws, t, 1.0) == 1.0
        assert W.mazja_rosin_statistic(ws, t, 1.0) == W.boundedness_statistic(ws, t)
        one = trees.build_path(1)
        ws1 = W.assign(one, W.constant(0.5), W.constant(3.0), 2.0)
        assert W.mazja_rosin_statistic(ws1, one, 2.0) == 1.5

    def test_mazja_rosin_needs_path(self):
        b = trees.build_binary(2)
        ws = W.assign(b, W.constant(1), W.constant(1), 2.0)
        with pytest.raises(trees.TreeError):
            W.mazja_rosin_statistic(ws, b, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_boundedness_monotone_in_weights(self, seed):
        rng = np.random.default_rng(seed)
        t = trees.random_tree(int(rng.integers(1, 40)), rng)
        a = rng.uniform(0.1, 2, t.node_count)
        s = np.exp(-np.cumsum(rng.uniform(0, 0.5, t.max_depth + 1)))[t.depth]
        q = float(rng.choice([1.5, 2.0, 3.0]))
        base = W.boundedness_statistic(W.assign(t, W.per_node(a), W.per_node(s), q), t)
        bump = rng.uniform(1, 2, t.node_count)
        up_a = W.boundedness_statistic(W.assign(t, W.per_node(a * bump), W.per_node(s), q), t)
        up_s = W.boundedness_statistic(W.assign(t, W.per_node(a), W.per_node(s * 1.5), q), t)
        assert up_a >= base and up_s >= base


class TestDyadic:
    def test_example(self):
        t = trees.build_path(4)
        ws = W.assign(t, W.constant(1), W.per_node([1, 0.7, 0.5, 0.3]), 2.0)
        sh, m = W.dyadic_round(ws)
        assert sh.tolist() == [1, 1, 0.5, 0.5]
        assert m.tolist() == [0, 0, 1, 1]

    def test_powers_of_two_fixed(self):
        t = trees.build_path(5)
        sig = 2.0 ** -np.arange(5)
        sh, m = W.dyadic_round(W.assign(t, W.constant(1), W.per_node(sig), 2.0))
        assert np.array_equal(sh, sig)
        assert m.tolist() == [0, 1, 2, 3, 4]
        sh, m = W.dyadic_round(W.assign(t, W.constant(1), W.constant(1), 2.0))
        assert np.all(sh == 1) and np.all(m == 0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_bracket(self, seed):
        rng = np.random.default_rng(seed)
        t = trees.random_tree(int(rng.integers(1, 60)), rng)
        sig = np.empty(t.node_count)
        sig[0] = 1.0
        for ids in t.levels[1:]:
            sig[ids] = sig[t.parent[ids]] * rng.uniform(0.05, 1.0, len(ids))
        ws = W.assign(t, W.constant(1), W.per_node(sig), 2.0)
        sh, m = W.dyadic_round(ws)
        assert np.all(ws.sigma <= sh) and np.all(sh <= 2 * ws.sigma)
        kids = np.arange(1, t.node_count)
        assert np.all(m[kids] >= m[t.parent[kids]])
