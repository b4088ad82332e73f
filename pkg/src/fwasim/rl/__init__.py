"""Distributed value learner: numpy MLP, prioritized replay, n-step
double-Q targets, plus the plain-DQN and random baselines."""

from .learner import Learner, LearnerConfig, double_q_bootstrap, n_step_return, td_loss
from .policy import EpsilonSchedule, act, encode_state
from .qnet import QNet, load_checkpoint, save_checkpoint
from .replay import Experience, NStepAccumulator, ReplayMemory

__all__ = [
    "Experience",
    "EpsilonSchedule",
    "Learner",
    "LearnerConfig",
    "NStepAccumulator",
    "QNet",
    "ReplayMemory",
    "act",
    "double_q_bootstrap",
    "encode_state",
    "load_checkpoint",
    "n_step_return",
    "save_checkpoint",
    "td_loss",
]
