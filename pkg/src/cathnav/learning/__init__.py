"""Training stack: networks, on-policy updates, imitation, curiosity."""

from .checkpoint import load_checkpoint, load_init_params, save_checkpoint
from .curiosity import Curiosity
from .curriculum import CurriculumState, curriculum_update, start_curriculum
from .gail import Discriminator, gail_update
from .nets import MLP, Adam
from .policy import GaussianPolicy, ValueNet, action_bounds, normalize_actions
from .ppo import discounted_gae, discounted_returns, normalize, ppo_loss_and_grads
from .trainer import (
    LOG_COLUMNS,
    TrainConfig,
    TrainResult,
    read_log_csv,
    total_loss,
    train,
    write_log_csv,
)

__all__ = [
    "Adam",
    "Curiosity",
    "CurriculumState",
    "Discriminator",
    "GaussianPolicy",
    "LOG_COLUMNS",
    "MLP",
    "TrainConfig",
    "TrainResult",
    "ValueNet",
    "action_bounds",
    "curriculum_update",
    "discounted_gae",
    "discounted_returns",
    "gail_update",
    "load_checkpoint",
    "load_init_params",
    "normalize",
    "normalize_actions",
    "ppo_loss_and_grads",
    "read_log_csv",
    "save_checkpoint",
    "start_curriculum",
    "total_loss",
    "train",
    "write_log_csv",
]
