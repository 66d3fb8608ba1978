import numpy as np
import pytest

from treeentropy import trees
from treeentropy import weights as W
from treeentropy.metric import MetricEvaluator


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def unit_path(n, q=1.0, sigma=None):
    """Path with alpha = 1 and the given sigma (default 1)."""
    t = trees.build_path(n)
    sig = W.constant(1.0) if sigma is None else W.per_node(sigma)
    ws = W.assign(t, W.constant(1.0), sig, q)
    return t, ws, MetricEvaluator(t, ws)


def one_weight(tree, gamma, q, law="polynomial"):
    """alpha from a decay law, sigma = 1."""
    a = W.polynomial(gamma) if law == "polynomial" else W.exponential(gamma)
    ws = W.assign(tree, a, W.constant(1.0), q)
    return MetricEvaluator(tree, ws)
