from .artifact import (BadMagic, CorruptDirectory, ModelArtifact, TensorEntry,
                       VersionUnsupported, load_model, save_model)
from .detector import (DetectionEvent, DetectorConfig, RateMismatch,
                       StreamingDetector, is_reserved, stream_detect)
from .quantize import EmptyCalibration, QuantizedModel, dequantize_tensor, quantize_int8, quantize_tensor

__all__ = [
    "BadMagic", "CorruptDirectory", "DetectionEvent", "DetectorConfig",
    "EmptyCalibration", "ModelArtifact", "QuantizedModel", "RateMismatch",
    "StreamingDetector", "TensorEntry", "VersionUnsupported",
    "dequantize_tensor", "is_reserved", "load_model", "quantize_int8",
    "quantize_tensor", "save_model", "stream_detect",
]
