"""Inexact augmented Lagrangian training of leaky-ReLU networks with
group-sparse weights, plus stochastic baselines and evaluation tools."""
from .network import DataBatch, HyperParams, NetworkShape, Params, forward, predict
from .outer_ialm import IalmConfig, IalmResult, run_ialam

__version__ = "0.1.0"

__all__ = ["DataBatch", "HyperParams", "NetworkShape", "Params", "forward", "predict",
           "IalmConfig", "IalmResult", "run_ialam", "__version__"]
