from .train import Example, TrainConfig, batch_loss, example_from_trace, token_accuracy, train
from .transformer import (ModelConfig, TinyTransformer, load_checkpoint, next_token_dist, p_backtrack_from_dist,
                          save_checkpoint)

__all__ = [
    "Example", "TrainConfig", "batch_loss", "example_from_trace", "token_accuracy", "train", "ModelConfig",
    "TinyTransformer", "load_checkpoint", "next_token_dist", "p_backtrack_from_dist", "save_checkpoint",
]
