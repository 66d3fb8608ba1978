"""Covering numbers, nets and entropy-number brackets for weighted summation on trees."""

__version__ = "0.1.0"

from .trees import Tree, build_binary, build_biased, build_moderate, build_path, random_tree
from .weights import WeightSystem, assign
from .metric import DecayProfile, MetricEvaluator
from .covering import covering_number, order_covering_number, verify_certificate
from .rates import fit_rate, predict

__all__ = [
    "Tree", "build_binary", "build_biased", "build_moderate", "build_path", "random_tree",
    "WeightSystem", "assign", "DecayProfile", "MetricEvaluator",
    "covering_number", "order_covering_number", "verify_certificate",
    "fit_rate", "predict", "__version__",
]
