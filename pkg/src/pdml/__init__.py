"""Privacy-preserving distributed machine learning over a server network.

Servers hold label-randomized data, train a regularized logistic classifier
with fully distributed ADMM and exchange noise-perturbed iterates.
"""

from .admm import AdmmConfig, NoiseSchedule, run
from .data import Dataset, RRMechanism, Schema, Shard, partition, randomize_shards, train_test_split
from .errors import PDMLError
from .metrics import accuracy, consensus_error, empirical_risk
from .objective import LossModel, ObjectiveSpec, generate_eta, loss, modified_loss
from .topology import Graph, build_graph, random_connected_graph, spectral_profile

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "Dataset",
    "Graph",
    "LossModel",
    "NoiseSchedule",
    "ObjectiveSpec",
    "PDMLError",
    "RRMechanism",
    "Schema",
    "Shard",
    "accuracy",
    "build_graph",
    "consensus_error",
    "empirical_risk",
    "generate_eta",
    "loss",
    "modified_loss",
    "partition",
    "random_connected_graph",
    "randomize_shards",
    "run",
    "spectral_profile",
    "train_test_split",
]
