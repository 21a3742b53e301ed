"""Desk-scale few-shot forgery detection with guided adversarial interpolation."""

from .numcore import ContractError
from .diffnet import ArchSpec, Classifier
from .gai import GaiConfig, Variant, gai_generate, gai_minus_generate, replace_batch
from .trainkit import Method, MethodSpec, TrainSchedule, finetune_from_base, train

__version__ = "0.1.0"

__all__ = [
    "ContractError", "ArchSpec", "Classifier", "GaiConfig", "Variant", "gai_generate", "gai_minus_generate",
    "replace_batch", "Method", "MethodSpec", "TrainSchedule", "finetune_from_base", "train",
]
