"""
Training configuration and its `key = value` file format
"""
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from lark import Token, Transformer, UnexpectedInput, v_args

from ._parser import config_parser
from .exceptions import ConfigError
from .losses import LossWeights
from .model import ModelConfig
from .utils import PathLike

ConfigValue = Union[int, float, str, Tuple[Any, ...]]

LR_SCHEDULES = ("cosine", "linear")


@dataclass(frozen=True)
class TrainConfig:
    """Optimiser, schedule, data pipeline and model settings of one training run"""

    total_iterations: int = 300_000
    batch_size: int = 16
    patch_size: int = 128
    lr_start: float = 2e-4
    lr_end: float = 1e-6
    lr_schedule: str = "cosine"
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    lambda_fft: float = 0.1
    seed: int = 0
    augment: bool = True
    min_side: int = 256
    queue_depth: int = 4
    log_interval: int = 100
    validation_interval: int = 5_000
    checkpoint_interval: int = 10_000
    checkpoint_dir: str = "checkpoints"
    base_channels: int = 48
    rb_per_block: int = 8
    activation: str = "relu"
    enable_sfe: bool = True
    enable_ff: bool = True
    precision: str = "float32"

    def __post_init__(self) -> None:
        object.__setattr__(self, "betas", tuple(float(beta) for beta in self.betas))
        if not self.lr_start > self.lr_end > 0:
            raise ConfigError(f"need lr_start > lr_end > 0, got {self.lr_start} / {self.lr_end}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ConfigError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if len(self.betas) != 2 or not all(0.0 <= beta < 1.0 for beta in self.betas):
            raise ConfigError(f"betas must be two values in [0, 1), got {self.betas}")
        if self.total_iterations < 0:
            raise ConfigError("total_iterations must not be negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.patch_size < 4 or self.patch_size % 4:
            raise ConfigError(f"patch_size must be a positive multiple of 4, got {self.patch_size}")
        if self.eps <= 0 or self.weight_decay < 0:
            raise ConfigError("eps must be positive and weight_decay non-negative")
        if self.queue_depth < 1 or self.log_interval < 1 or self.min_side < 1:
            raise ConfigError("queue_depth, log_interval and min_side must be positive")
        if self.validation_interval < 0 or self.checkpoint_interval < 0:
            raise ConfigError("validation_interval and checkpoint_interval must not be negative")
        # model and loss settings validate themselves
        self.model_config()
        self.loss_weights()

    def model_config(self) -> ModelConfig:
        """Architecture described by this configuration"""
        return ModelConfig(
            base_channels=self.base_channels,
            rb_per_block=self.rb_per_block,
            activation=self.activation,
            enable_sfe=self.enable_sfe,
            enable_ff=self.enable_ff,
            seed=self.seed,
            precision=self.precision,
        )

    def loss_weights(self) -> LossWeights:
        """Loss mixing described by this configuration"""
        return LossWeights(lambda_fft=self.lambda_fft)

    def replace(self, **changes: Any) -> "TrainConfig":
        """Copy with some fields changed"""
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        """JSON-compatible field mapping"""
        values = dataclasses.asdict(self)
        values["betas"] = list(self.betas)
        return values

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        """Inverse of to_dict"""
        return cls(**{**values, "betas": tuple(values.get("betas", (0.9, 0.999)))})


@v_args(inline=True)
class ConfigTransformer(Transformer):
    """Turn the parse tree of a configuration file into (key token, value) pairs"""

    def start(self, *entries: Tuple[Token, ConfigValue]) -> List[Tuple[Token, ConfigValue]]:
        """Entrance rule"""
        return list(entries)

    def entry(self, key: Token, value: ConfigValue) -> Tuple[Token, ConfigValue]:
        """Rule for entry"""
        return key, value

    def sequence(self, *items: ConfigValue) -> Tuple[ConfigValue, ...]:
        """Rule for comma-separated tuples"""
        return tuple(items)

    def number(self, token: Token) -> Union[int, float]:
        """Rule for numbers"""
        text = str(token)
        if any(marker in text for marker in ".eE"):
            return float(text)
        return int(text)

    def string(self, token: Token) -> str:
        """Rule for quoted strings"""
        return str(token)[1:-1].replace('\\"', '"')

    def bare(self, token: Token) -> str:
        """Rule for bare words"""
        return str(token)


def _coerce(name: str, value: ConfigValue, default: Any) -> Any:
    if isinstance(default, bool):
        if value in ("true", "false"):
            return value == "true"
        raise ConfigError(f"'{name}' expects true or false, got {value!r}")
    if isinstance(default, int):
        if isinstance(value, int) or (isinstance(value, float) and value.is_integer()):
            return int(value)
        raise ConfigError(f"'{name}' expects an integer, got {value!r}")
    if isinstance(default, float):
        if isinstance(value, (int, float)):
            return float(value)
        raise ConfigError(f"'{name}' expects a number, got {value!r}")
    if isinstance(default, tuple):
        if isinstance(value, tuple) and all(isinstance(item, (int, float)) for item in value):
            return tuple(float(item) for item in value)
        raise ConfigError(f"'{name}' expects comma-separated numbers, got {value!r}")
    if isinstance(value, str):
        return value
    raise ConfigError(f"'{name}' expects a word or quoted string, got {value!r}")


def parse_train_config(text: str) -> TrainConfig:
    """Parse configuration text; omitted keys keep their defaults"""
    try:
        tree = config_parser.parse(text)
    except UnexpectedInput as error:
        raise ConfigError(f"{error.line}:{error.column}: malformed configuration line") from error
    entries = ConfigTransformer().transform(tree)

    defaults = {field.name: field.default for field in dataclasses.fields(TrainConfig)}
    values: Dict[str, Any] = {}
    for key, value in entries:
        name = str(key)
        if name not in defaults:
            raise ConfigError(f"{key.line}:{key.column}: unknown configuration key '{name}'")
        if name in values:
            raise ConfigError(f"{key.line}:{key.column}: duplicated configuration key '{name}'")
        values[name] = _coerce(name, value, defaults[name])
    return TrainConfig(**values)


def load_train_config(path: PathLike) -> TrainConfig:
    """Read and parse a configuration file"""
    return parse_train_config(Path(path).read_text(encoding="utf-8"))
