import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeentropy import checks, trees
from treeentropy import weights as W
from treeentropy.metric import DecayProfile, MetricEvaluator, dbar, radial_dist

from conftest import one_weight, unit_path


def brute_dist(tree, ws, t, s):
    """Literal definition, walking the tree."""
    if t == s:
        return 0.0
    m = tree.meet(t, s)
    if m not in (t, s):
        return brute_dist(tree, ws, m, t) + brute_dist(tree, ws, m, s)
    lo, hi = (t, s) if m == t else (s, t)
    best, acc = 0.0, 0.0
    for v in tree.order_interval(lo, hi, half_open=True):
        acc += ws.alpha[v] ** ws.q
        best = max(best, acc ** (1 / ws.q) * ws.sigma_true[v])
    return best


class TestDist:
    def test_examples(self):
        _, _, me = unit_path(3, q=2.0)
        assert me.dist(1, 1) == 0.0
        assert me.dist(0, 2) == math.sqrt(2)
        _, _, me = unit_path(3, q=1.0, sigma=[1, 1, 0.5])
        assert me.dist(0, 2) == 1.0
        b = trees.build_binary(1)
        me = MetricEvaluator(b, W.assign(b, W.constant(1), W.constant(1), 1.0))
        assert me.dist(1, 2) == 2.0

    def test_matches_definition(self, rng):
        for _ in range(30):
            inst = checks.random_instance(rng, max_nodes=25)
            me = inst.me
            D = me.distance_matrix()
            for t, s in rng.integers(0, inst.tree.node_count, (20, 2)):
                ref = brute_dist(inst.tree, inst.ws, int(t), int(s))
                assert D[t, s] == pytest.approx(ref, rel=1e-12, abs=0)
                assert me.dist(int(t), int(s)) == pytest.approx(ref, rel=1e-12, abs=0)

    def test_sigma_scaling(self, rng):
        inst = checks.random_instance(rng, max_nodes=30)
        ws2 = W.assign(inst.tree, W.per_node(inst.ws.alpha), W.per_node(inst.ws.sigma_true * 3.0), inst.ws.q)
        D1 = inst.me.distance_matrix()
        D2 = MetricEvaluator(inst.tree, ws2).distance_matrix()
        np.testing.assert_allclose(D2, 3.0 * D1, rtol=1e-14)

    def test_axioms_small_batch(self, rng):
        for _ in range(20):
            assert checks.check_metric_axioms(checks.random_instance(rng))["violations"] == 0


class TestRadial:
    def test_against_materialized_binary(self, rng):
        b = trees.build_binary(10)
        me = one_weight(b, 3.0, 2.0)
        s = rng.integers(0, b.node_count, 1000)
        n = rng.integers(0, b.depth[s] + 1)
        t = b.ancestor_at_depth(s, n)
        fast = me.radial_many(b.depth[t], b.depth[s])
        slow = np.array([radial_dist(me.ws.level_alpha, me.ws.level_sigma, 2.0, int(b.depth[x]), int(b.depth[y]))
                         for x, y in zip(t, s)])
        ref = np.array([brute_dist(b, me.ws, int(x), int(y)) for x, y in zip(t[:200], s[:200])])
        np.testing.assert_allclose(fast, slow, rtol=1e-12)
        np.testing.assert_allclose(slow[:200], ref, rtol=1e-12)

    def test_trivial_cases(self):
        a = np.ones(6)
        assert radial_dist(a, a, 2.0, 3, 3) == 0.0
        vals = [radial_dist(a, a, 2.0, 1, k) for k in range(2, 6)]
        assert vals == pytest.approx([math.sqrt(k - 1) for k in range(2, 6)])


class TestDecay:
    def test_dbar(self):
        p = DecayProfile.polynomial(2.0)
        assert dbar(p, 3.0, 3.0) == 0.0
        assert dbar(p, 1.0, 2.0) == 0.5
        assert dbar(p, 2.0, math.inf) == p.Phi(2.0)
        with pytest.raises(ValueError):
            dbar(p, 2.0, 1.0)

    @pytest.mark.parametrize("closed", [DecayProfile.polynomial(2.5, 1.3), DecayProfile.exponential(0.7, 2.0)])
    def test_numeric_matches_closed_forms(self, closed):
        num = DecayProfile.numeric(closed.phi)
        for y in (0.5, 1.0, 3.0, 7.5):
            assert num.Phi(y) == pytest.approx(closed.Phi(y), rel=1e-9)
        for z in (1e-3, 0.05, 0.4):
            assert num.phi_inv(z) == pytest.approx(closed.phi_inv(z), rel=1e-9)
            assert num.Phi_inv(z) == pytest.approx(closed.Phi_inv(z), rel=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), gamma=st.floats(1.2, 4.0))
    def test_domination(self, seed, gamma):
        # (alpha sigma)^q <= phi(|t|)  =>  d(t, s)^q <= dbar(|t|, |s|)
        rng = np.random.default_rng(seed)
        t = trees.random_tree(int(rng.integers(2, 50)), rng)
        q = 2.0
        prof = DecayProfile.polynomial(gamma)
        lev = np.maximum(1, t.depth).astype(float)
        alpha = (prof._phi_vec(lev) ** (1 / q)) * rng.uniform(0.3, 1.0, t.node_count)
        me = MetricEvaluator(t, W.assign(t, W.per_node(alpha), W.constant(1.0), q))
        anc = checks.ancestor_matrix(t)
        D = me.distance_matrix()
        for a, b in zip(*np.nonzero(anc)):
            if a == b or t.depth[a] == 0:
                continue
            assert D[a, b] ** q <= dbar(prof, t.depth[a], t.depth[b]) * (1 + 1e-12)
