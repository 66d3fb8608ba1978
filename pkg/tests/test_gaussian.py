import csv
import math

import numpy as np
import pytest

from treeentropy import checks
from treeentropy import gaussian as G
from treeentropy import trees
from treeentropy import weights as W


def run_for(tree, alpha=1.0, sigma=1.0, n=1000, seed=7, grid=(), workers=1, q=2.0):
    ws = W.assign(tree, W.constant(alpha), W.constant(sigma), q)
    return G.GaussianRun(tree, ws, seed, n, list(grid), workers=workers)


class TestSampling:
    def test_single_node_cdf(self):
        run = run_for(trees.build_path(1), n=100_000, grid=[1.0])
        est = G.small_deviation(run)
        exact = G.gaussian_cdf_sup_single(1.0)
        assert exact == pytest.approx(0.6827, abs=1e-4)
        assert est.ci_lo[0] <= exact <= est.ci_hi[0]

    def test_single_node_scaled(self):
        run = run_for(trees.build_path(1), alpha=2.0, sigma=0.25, n=2000)
        x = G.sample_field(run, range(2000))[:, 0]
        xi = np.array([G.sample_generator(7, i).standard_normal(1)[0] for i in range(2000)])
        assert np.allclose(x, 0.5 * xi, rtol=1e-15)

    def test_siblings_moments(self):
        t = trees.build_binary(1)
        run = run_for(t, n=100_000)
        X = G.sample_field(run, range(100_000))
        n = len(X)
        var_u = X[:, 1].var()
        cov = np.mean(X[:, 1] * X[:, 2]) - X[:, 1].mean() * X[:, 2].mean()
        # standard errors for Gaussian second moments
        assert abs(var_u - 2.0) < 3 * math.sqrt(2 * 4.0 / n)
        assert abs(cov - 1.0) < 3 * math.sqrt((2.0 * 2.0 + 1.0) / n)

    def test_deterministic(self):
        t = trees.build_binary(4)
        a = G.sample_sup(run_for(t, n=3000, seed=11))
        b = G.sample_sup(run_for(t, n=3000, seed=11))
        c = G.sample_sup(run_for(t, n=3000, seed=12))
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_worker_and_batch_independent(self):
        t = trees.build_binary(4)
        one = G.sample_sup(run_for(t, n=2500, seed=3))
        run = run_for(t, n=2500, seed=3, workers=2)
        run.batch = 300
        assert np.array_equal(one, G.sample_sup(run))

    def test_prefix_stable(self):
        t = trees.build_binary(3)
        a = G.sample_sup(run_for(t, n=500, seed=5))
        b = G.sample_sup(run_for(t, n=1500, seed=5))
        assert np.array_equal(a, b[:500])


class TestCovariance:
    def test_root(self):
        t = trees.build_binary(2)
        ws = W.assign(t, W.constant(1.5), W.constant(0.4), 2.0)
        assert G.covariance(ws, t, 0, 0) == pytest.approx((0.4 * 1.5) ** 2)

    def test_siblings(self):
        t = trees.build_binary(1)
        ws = W.assign(t, W.constant(1.0), W.constant(1.0), 2.0)
        assert G.covariance(ws, t, 1, 2) == 1.0
        assert G.covariance(ws, t, 1, 1) == 2.0

    def test_empirical(self, rng):
        inst = checks.random_instance(rng, 15, qs=(2.0,), min_nodes=15)
        t, ws = inst.tree, inst.ws
        run = G.GaussianRun(t, ws, 99, 40_000)
        X = G.sample_field(run, range(40_000))
        emp = np.cov(X.T, bias=True)
        for a in range(15):
            for b in range(a, 15):
                ref = G.covariance(ws, t, a, b)
                se = math.sqrt((emp[a, a] * emp[b, b] + emp[a, b] ** 2) / 40_000)
                assert abs(emp[a, b] - ref) < 5 * se


class TestSmallDeviation:
    def test_monotone_and_flags(self):
        t = trees.build_binary(5)
        run = run_for(t, alpha=0.3, n=5000, grid=np.geomspace(0.05, 3.0, 12))
        est = G.small_deviation(run)
        assert np.all(np.diff(est.p_hat) >= 0)
        assert est.flag[0] in ("zero", "few")
        assert est.flag[-1] == "band"  # p close to 1
        assert any(f == "ok" for f in est.flag)
        assert np.all(est.ci_lo <= est.p_hat) and np.all(est.p_hat <= est.ci_hi)

    def test_zero_not_extrapolated(self):
        est = G.estimate_from_sups(np.array([1.0, 2.0, 3.0]), [0.5])
        assert est.flag == ["zero"] and math.isinf(est.minus_log_p[0])

    def test_csv(self, tmp_path):
        est = G.estimate_from_sups(np.linspace(0.1, 2, 200), [0.5, 1.0])
        path = tmp_path / "sd.csv"
        est.to_csv(path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["epsilon", "p_hat", "ci_lo", "ci_hi", "minus_log_p", "flag"]
        assert len(rows) == 3

    def test_q_refused(self):
        with pytest.raises(G.GaussianError):
            run_for(trees.build_path(3), q=3.0)

    def test_seed_range(self):
        ws = W.assign(trees.build_path(2), W.constant(1.0), W.constant(1.0), 2.0)
        with pytest.raises(G.GaussianError):
            G.GaussianRun(trees.build_path(2), ws, -1, 10)
