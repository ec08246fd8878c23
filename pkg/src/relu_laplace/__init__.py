"""Laplace approximations that keep ReLU classifiers from being overconfident far from the data."""
from .data import LabeledDataset, toy_binary, toy_multiclass
from .errors import LaplaceError
from .laplace import LaplaceConfig, fit_posterior
from .network import Mlp, forward
from .predictive import PredictiveConfig, predict
from .train import TrainConfig, train_map

__version__ = "0.1.0"
