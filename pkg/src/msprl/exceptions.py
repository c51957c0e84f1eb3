"""Exceptions raised by the inverse halftoning pipeline"""


class MsprlError(Exception):
    """Base exception class for msprl"""


class ShapeError(MsprlError):
    """Tensor or image extents do not fit the operation"""


class NonFiniteError(MsprlError):
    """An operation produced NaN or Inf values"""


class GraphError(MsprlError):
    """The recorded graph cannot be differentiated"""


class ImageFormatError(MsprlError):
    """Malformed or unsupported PGM file"""


class DatasetError(MsprlError):
    """Dataset is empty or an image cannot be sampled"""


class ConfigError(MsprlError):
    """Invalid configuration file or value"""


class SelectorError(MsprlError):
    """Unknown feature map selector"""


class OptimizerError(MsprlError):
    """Optimizer step cannot be applied"""


class CheckpointError(MsprlError):
    """Base exception for checkpoint reading and writing"""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version"""


class CheckpointTruncatedError(CheckpointError):
    """Checkpoint file ended before all records were read"""


class ChecksumError(CheckpointError):
    """Checkpoint payload does not match its CRC-32"""


class ParameterMismatchError(CheckpointError):
    """Checkpoint tensors do not match the model registry"""


class TrainingDivergedError(MsprlError):
    """Training produced a non-finite loss"""

    def __init__(self, message: str, dump_dir: str = "") -> None:
        super().__init__(message)
        self.dump_dir = dump_dir
