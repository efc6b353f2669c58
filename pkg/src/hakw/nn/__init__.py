from .model import BaseModel, CnnModel, LstmModel, ModelConfig, build_model
from .ops import ShapeMismatch, softmax, softmax_xent
from .train import (Adam, EarlyStopper, EmptyClass, EvalReport,
                    FeatureConfigMismatch, LabelOutOfRange, NanLoss,
                    REFERENCE_VAL_ACCURACY, TrainConfig, TrainReport, evaluate,
                    fine_tune, predict_probs, train)

__all__ = [
    "Adam", "BaseModel", "CnnModel", "EarlyStopper", "EmptyClass", "EvalReport",
    "FeatureConfigMismatch", "LabelOutOfRange", "LstmModel", "ModelConfig",
    "NanLoss", "REFERENCE_VAL_ACCURACY", "ShapeMismatch", "TrainConfig",
    "TrainReport", "build_model", "evaluate", "fine_tune", "predict_probs",
    "softmax", "softmax_xent", "train",
]
