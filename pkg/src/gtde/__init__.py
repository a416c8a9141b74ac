"""Grouped training with decentralized execution for multi-agent RL.

The training side dynamically groups agents through a Gumbel-Sigmoid
sampled adjacency matrix and fuses group members' history embeddings
(by adjacency product or masked graph attention) into the critic input;
execution reads nothing but each agent's own observation history. DTDE
and CTDE baselines plus the fixed / uniform / all-ones grouping ablations
share the same trainer.
"""

from .algos import (ALGORITHMS, GTDE_FAMILY, PARADIGMS, Adam, ConfigurationError,
                    NumericAbort, ParadigmConfig, Trainer, build_critic_input,
                    compute_gae, train)
from .aggregate import AggregatedFeatures, gat_aggregate, matmul_aggregate
from .config import ConfigError, RunConfig, dump_defaults, load_run_config
from .grouping import (AdjacencyMatrix, GroupAssignment, apply_drop_mask,
                       apply_self_link_mask, avg_node_information,
                       extract_groups, sample_adjacency)
from .harness import (CompatibilityError, ProtocolError, ablate, crossplay,
                      evaluate, inspect_groups, run_training)
from .nets import HistoryBuffer, HistoryWindow, NetConfig, SharedParams
from .reparam import (GumbelSample, gumbel_sigmoid, gumbel_softmax,
                      sample_gumbel, straight_through)
from .rng import Rng
# The factory function gtde.tensor.tensor is deliberately not re-exported:
# it would shadow the gtde.tensor submodule attribute.
from .tensor import Tape, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "GTDE_FAMILY", "PARADIGMS",
    "Adam", "ConfigurationError", "NumericAbort", "ParadigmConfig", "Trainer",
    "build_critic_input", "compute_gae", "train",
    "AggregatedFeatures", "gat_aggregate", "matmul_aggregate",
    "ConfigError", "RunConfig", "dump_defaults", "load_run_config",
    "AdjacencyMatrix", "GroupAssignment", "apply_drop_mask",
    "apply_self_link_mask", "avg_node_information", "extract_groups",
    "sample_adjacency",
    "CompatibilityError", "ProtocolError", "ablate", "crossplay", "evaluate",
    "inspect_groups", "run_training",
    "HistoryBuffer", "HistoryWindow", "NetConfig", "SharedParams",
    "GumbelSample", "gumbel_sigmoid", "gumbel_softmax", "sample_gumbel",
    "straight_through",
    "Rng", "Tape", "Tensor", "backward",
]
