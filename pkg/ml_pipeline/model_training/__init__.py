from .batch_scheduler import language_batch_scheduler
from .modularized_network import ModularizedNetwork, model_forward
from .train_pipeline import ModularTrainer, TrainState, best_model, train
from .trained_model import TrainedModel

__all__ = [
    "ModularTrainer",
    "ModularizedNetwork",
    "TrainState",
    "TrainedModel",
    "best_model",
    "language_batch_scheduler",
    "model_forward",
    "train",
]
