import math

import numpy as np
import pytest
from scipy import integrate

from treeentropy import covering as C
from treeentropy import nets, trees
from treeentropy import weights as W
from treeentropy.metric import DecayProfile, MetricEvaluator, dbar

from conftest import one_weight


@pytest.fixture(scope="module")
def biased_deep():
    t = trees.build_biased(1, 260)
    return MetricEvaluator(t, W.assign(t, W.polynomial(2.5), W.constant(1), 2.0))


class TestLevelNet:
    def test_example(self):
        net = nets.level_net(DecayProfile.polynomial(2.0), 0.1)
        assert net.M_eps == [1, 2, 3]
        assert net.u_tilde == pytest.approx([10, 5, 10 / 3])
        assert net.N == 3
        assert net.u == [10, 5, 4]
        assert net.valid

    def test_large_eps(self):
        net = nets.level_net(DecayProfile.polynomial(2.0), 1.0)
        assert net.M_eps == [1]
        assert net.valid

    @pytest.mark.parametrize("prof", [DecayProfile.polynomial(g) for g in (1.2, 1.5, 2.0, 3.0, 5.0)]
                             + [DecayProfile.exponential(g) for g in (0.3, 1.0, 2.0)])
    def test_scan_many(self, prof):
        for eps in np.geomspace(1e-4, 2.0, 25):
            net = nets.level_net(prof, float(eps))
            assert net.valid, (prof.closed_form, prof.gamma, eps)
            gaps = np.diff(net.u_tilde)
            assert np.all(-gaps > 1)

    def test_scan_oracle(self):
        # independent check with dbar from the metric module
        prof = DecayProfile.polynomial(2.0)
        net = nets.level_net(prof, 0.1)
        pts = net.levels
        for n in range(1, 2000):
            w = max(p for p in pts if p <= n)
            assert dbar(prof, w, n) < 0.2


class TestTreeNet:
    def test_path_one_node_per_level(self):
        t = trees.build_path(200)
        me = one_weight(t, 2.0, 1.0)
        cert = nets.tree_net_from_levels(me, DecayProfile.polynomial(2.0), 0.1)
        lv = nets.level_net(DecayProfile.polynomial(2.0), 0.1).levels
        assert cert.verified
        assert cert.centers == [0] + [n for n in lv if n < 200]

    def test_binary_16(self):
        t = trees.build_binary(16)
        me = one_weight(t, 3.0, 2.0)
        cert = nets.tree_net_from_levels(me, DecayProfile.polynomial(3.0), 0.4)
        assert cert.verified and cert.construction == "level_net"
        assert cert.epsilon == pytest.approx(2 ** 0.5 * 0.4)

    def test_domination_refused(self):
        t = trees.build_path(20)
        me = one_weight(t, 1.5, 2.0)
        with pytest.raises(nets.NetError, match="node"):
            nets.tree_net_from_levels(me, DecayProfile.polynomial(3.0), 0.2)


class TestProp7Bound:
    def test_example(self):
        val = nets.prop7_bound(nets.LevelProfile.constant(), DecayProfile.polynomial(2.0), 1.0, 0.1)
        # phi^{-1}(0.05) + 1, plus one point, plus 20 * int_{sqrt 20}^{20} x^-2
        ref = math.sqrt(20) + 1 + 1 + 20 * (1 / math.sqrt(20) - 1 / 20)
        assert val == pytest.approx(ref, rel=1e-9)
        assert val == pytest.approx(9.95, abs=0.01)

    def test_bounds_measured(self):
        t = trees.build_moderate(1.0, 120)
        me = one_weight(t, 2.5, 2.0)
        rho = nets.LevelProfile.polynomial(1.0, c=float((t.R / np.maximum(1, np.arange(len(t.R)))).max()))
        for eps in (0.5, 0.3, 0.2, 0.1):
            assert nets.prop7_bound(rho, DecayProfile.polynomial(2.5), 2.0, eps) >= C.order_covering_number(me, eps)

    def test_large_eps_small(self):
        v = nets.prop7_bound(nets.LevelProfile.constant(), DecayProfile.polynomial(2.0), 1.0, 50.0)
        assert v < 5

    def test_mode_error(self):
        with pytest.raises(nets.NetError):
            nets.prop7_bound(nets.LevelProfile.polynomial(2.0), DecayProfile.polynomial(2.0), 2.0, 0.1,
                             mode="convergent")


class TestBiased:
    def test_spec_example(self):
        spec = nets.biased_net_spec(1, 2.5, 2.0, 0.3, 4.0)
        assert spec.J == 2
        assert spec.n == [4, 3]
        assert spec.nu == [4, 3]
        assert spec.s1_levels == 3
        assert spec.size <= 14

    def test_degenerate(self):
        assert nets.biased_net_spec(1, 2.5, 2.0, 1.5, 8.0).J <= 1

    def test_grid_verifies(self, biased_deep):
        ratios = []
        for k in range(1, 7):
            spec, cert = nets.biased_net(biased_deep, 2.5, 2.0 ** -k)
            assert cert.verified and cert.construction == "biased"
            assert spec.c_star == 8.0
            assert spec.lemma_ok, spec.lemma_failures
            ratios.append(spec.size_ratio)
        assert max(ratios) / min(ratios) < 3

    def test_needs_depth(self):
        t = trees.build_biased(1, 20)
        me = MetricEvaluator(t, W.assign(t, W.polynomial(2.5), W.constant(1), 2.0))
        with pytest.raises(nets.NetError, match="depth"):
            nets.biased_net(me, 2.5, 0.01)

    def test_lambda_too_large(self):
        with pytest.raises(trees.TreeError):
            trees.build_biased(3, 10)


class TestSeparated:
    def test_p9a_example(self):
        t = trees.build_binary(8)
        me = one_weight(t, 2.0, 2.0)
        cert = nets.separated_set_p9a(me, DecayProfile.polynomial(2.0), 0.5)
        assert cert.size == 7 and cert.verified
        assert cert.pairwise_min >= 0.5

    def test_p9a_root_only(self):
        t = trees.build_binary(4)
        me = one_weight(t, 2.0, 2.0)
        cert = nets.separated_set_p9a(me, DecayProfile.polynomial(2.0), 1.5)
        assert cert.points == [0] and cert.verified

    def test_p9a_exact_tie(self):
        # q = gamma and eps = 0.1 put level 10 exactly at distance eps from its parent
        t = trees.build_path(500)
        me = one_weight(t, 2.0, 2.0)
        cert = nets.separated_set_p9a(me, DecayProfile.polynomial(2.0), 0.1)
        assert cert.verified
        assert cert.size in (10, 11)

    def test_p9a_size_bound_biased(self):
        t = trees.build_biased(1, 200)
        me = one_weight(t, 2.5, 2.0)
        prof = DecayProfile.polynomial(2.5)
        for eps in np.geomspace(0.5, 0.05, 10):
            cert = nets.separated_set_p9a(me, prof, float(eps))
            assert cert.verified
            top = prof.phi_inv(eps ** 2) - 1
            if top > 1:
                bound, _ = integrate.quad(lambda x: x, 1, top)  # R(n) >= n for this tree
                assert cert.size >= bound

    def test_p9c_path(self):
        t = trees.build_path(400)
        me = one_weight(t, 3.0, 2.0)
        prof = DecayProfile.polynomial(3.0)
        lv = nets.p9c_levels(prof, 2.0, 0.03)
        cert = nets.separated_set_p9c(me, prof, 0.03)
        assert cert.verified
        assert cert.size == lv.m - 1
        assert sorted(t.depth[cert.points].tolist()) == sorted(lv.v[:-1])

    def test_p9c_binary(self):
        t = trees.build_binary(20)
        me = one_weight(t, 3.0, 2.0)
        prof = DecayProfile.polynomial(3.0)
        lv = nets.p9c_levels(prof, 2.0, 0.024)
        cert = nets.separated_set_p9c(me, prof, 0.024)
        assert cert.verified and cert.construction == "p9c"
        assert cert.size == lv.size(lambda n: 2 ** n)

    def test_p9c_low4(self):
        prof = DecayProfile.polynomial(3.0)
        for eps in (0.01, 0.005, 0.002):
            assert nets.p9c_levels(prof, 2.0, eps).low4_holds

    def test_p9c_degenerate_large_eps(self):
        lv = nets.p9c_levels(DecayProfile.polynomial(3.0), 2.0, 0.45)
        assert lv.m == 0 and lv.v == []


class TestCounterexample:
    def test_two_weights_refused(self):
        t = trees.build_path(60)
        ws = nets.counterexample_weights(t, 3.0, 2.0)
        me = MetricEvaluator(t, ws)
        with pytest.raises(nets.NetError, match="one-weight"):
            nets.separated_set_p9c(me, DecayProfile.polynomial(3.0), 0.05)

    def test_distance_estimate_fails(self):
        # same (alpha sigma)^q profile; d^q / dbar keeps shrinking only for two weights
        t = trees.build_path(400)
        prof = DecayProfile.polynomial(3.0)
        bad = MetricEvaluator(t, nets.counterexample_weights(t, 3.0, 2.0))
        good = one_weight(t, 3.0, 2.0)
        r_bad = [bad.dist(a, 399) ** 2 / dbar(prof, a, 399) for a in (10, 50, 200)]
        r_good = [good.dist(a, 399) ** 2 / dbar(prof, a, 399) for a in (10, 50, 200)]
        assert min(r_good) > 0.5
        assert r_bad[0] > r_bad[1] > r_bad[2]
        assert r_bad[0] / r_bad[2] > 5


class TestLogCounts:
    def test_ordering_and_fit(self):
        grid = 2.0 ** -np.arange(7, 15)
        rows = nets.binary_lognet_counts(3.0, 2.0, grid)
        up = np.array([r["log_upper"] for r in rows])
        lo = np.array([r["log_lower"] for r in rows])
        assert np.all(up >= lo)
        assert all(r["net_valid"] for r in rows)
        slope = np.polyfit(np.log(1 / grid), np.log(up), 1)[0]
        assert abs(slope - 1.0) < 0.2

    def test_large_eps(self):
        r = nets.binary_lognet_counts(3.0, 2.0, [0.9])[0]
        assert r["log_upper"] <= (r["deepest_level"] + 1) * math.log(2)

    def test_against_materialized(self):
        t = trees.build_binary(16)
        me = one_weight(t, 3.0, 2.0)
        for eps in (0.3, 0.2, 0.15):
            r = nets.binary_lognet_counts(3.0, 2.0, [eps])[0]
            assert r["deepest_level"] <= 16
            assert math.log(C.order_covering_number(me, eps)) <= r["log_upper"]
