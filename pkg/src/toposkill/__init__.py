"""Topology-discovering goal-conditioned learner.

The system couples four learners that share one replay stream: a contrastive
state encoder whose embedding tracks the environment's connectivity, a
growing cluster network over those embeddings, a state-independent policy
that picks which cluster to practice in (trading novelty against tracked
extrinsic value), and a goal-conditioned actor-critic rewarded by embedding
distance to its goal.
"""

from .encoder import (ContrastiveConfig, EncoderParams, contrastive_loss,
                      encode, info_nce_bound, sample_negative_indices,
                      similarity, update_target)
from .envs import GridWorld, SparsePointMaze, four_rooms, open_room
from .errors import ConfigError, InvalidStateError, NotReadyError, NumericalAbort
from .loop import FlatAgentTrainer, LoopConfig, Trainer
from .policy import (AgentConfig, CategoricalPolicyAgent, GaussianPolicyAgent,
                     intrinsic_reward)
from .selector import SelectorConfig, high_level_distribution, sample_goal_state
from .store import (LearningMixConfig, RingBuffer, Transition, relabel,
                    route_transition, sample_learning_batch,
                    skewed_cluster_distribution)
from .topology import ClusterNode, OegnConfig, StepReport, TopologyGraph

__version__ = "0.1.0"

__all__ = [
    "AgentConfig", "CategoricalPolicyAgent", "ClusterNode", "ConfigError",
    "ContrastiveConfig", "EncoderParams", "FlatAgentTrainer",
    "GaussianPolicyAgent", "GridWorld", "InvalidStateError",
    "LearningMixConfig", "LoopConfig", "NotReadyError", "NumericalAbort",
    "OegnConfig", "RingBuffer", "SelectorConfig", "SparsePointMaze",
    "StepReport", "TopologyGraph", "Trainer", "Transition",
    "contrastive_loss", "encode", "four_rooms", "high_level_distribution",
    "info_nce_bound", "intrinsic_reward", "open_room", "relabel",
    "route_transition", "sample_goal_state", "sample_learning_batch",
    "sample_negative_indices", "similarity", "skewed_cluster_distribution",
    "update_target",
]
