from .checkpoint import load_checkpoint, save_checkpoint
from .gradient_check import GradientCheckResult, gradient_check
from .layers import LayerKind, LayerSpec, Tape, backward, forward, init_params
from .model_configuration import ArchitectureConfig, TrainingConfig, match_parameter_budget
from .optimizer import MomentumOptimizer, sgd_momentum_step
from .param_store import ParamStore

__all__ = [
    "ArchitectureConfig",
    "GradientCheckResult",
    "LayerKind",
    "LayerSpec",
    "MomentumOptimizer",
    "ParamStore",
    "Tape",
    "TrainingConfig",
    "backward",
    "forward",
    "gradient_check",
    "init_params",
    "load_checkpoint",
    "match_parameter_budget",
    "save_checkpoint",
    "sgd_momentum_step",
]
