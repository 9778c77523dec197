"""Hierarchical dialogue-act tagging with context-aware self-attention and a CRF."""

from dialogact.config import ModelConfig, TrainConfig
from dialogact.corpus import Conversation, LabelSet, Utterance, load_corpus
from dialogact.errors import ContractError, DialogActError, DimensionError, FormatError, NumericError
from dialogact.model import ConversationModel, build_model

__all__ = [
    "ModelConfig", "TrainConfig", "Conversation", "LabelSet", "Utterance", "load_corpus",
    "ContractError", "DialogActError", "DimensionError", "FormatError", "NumericError",
    "ConversationModel", "build_model",
]
