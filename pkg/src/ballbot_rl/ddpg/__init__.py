from .agent import (Agent, DdpgHyper, actor_forward, actor_objective_grad, actor_update,
                    critic_forward, critic_loss_grad, critic_update, load_checkpoint,
                    save_checkpoint, select_action, soft_update, td_targets, train)
from .mlp import Adam, MlpWeights, backward, forward, init_uniform
from .noise import GaussianNoise, OUNoise
from .replay import Batch, ReplayBuffer, Transition

__all__ = [
    "Adam", "Agent", "Batch", "DdpgHyper", "GaussianNoise", "MlpWeights", "OUNoise",
    "ReplayBuffer", "Transition", "actor_forward", "actor_objective_grad", "actor_update",
    "backward", "critic_forward", "critic_loss_grad", "critic_update", "forward",
    "init_uniform", "load_checkpoint", "save_checkpoint", "select_action", "soft_update",
    "td_targets", "train",
]
