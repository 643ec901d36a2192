"""refmodel: a small trainable transformer with rank-1 editing that
answers the beliefbench probe protocol."""

from .edit import EditConfig, EditHandle, apply_edit
from .model import ModelConfig, TinyLM
from .serve import ProbeServer
from .tokenizer import Tokenizer, TokenizerError
from .train import TrainConfig, fact_accuracy, load_checkpoint, train

__all__ = [
    "EditConfig", "EditHandle", "apply_edit",
    "ModelConfig", "TinyLM",
    "ProbeServer",
    "Tokenizer", "TokenizerError",
    "TrainConfig", "fact_accuracy", "load_checkpoint", "train",
]
