"""Test the training configuration and its file format"""
import pytest
from lark import Lark

from msprl.config import TrainConfig, load_train_config, parse_train_config
from msprl.exceptions import ConfigError

SAMPLE = """
# desk-scale run
total_iterations = 2000
batch_size = 8
patch_size = 64
lr_start = 1e-3
lr_end = 1e-5
betas = 0.9, 0.99
lambda_fft = 0
augment = false
activation = gelu
checkpoint_dir = "runs/desk 1"
base_channels = 16   # narrow
rb_per_block = 2
"""


def test_grammar_accepts_sample(config_grammar: Lark):
    """The shipped grammar parses a typical file"""
    tree = config_grammar.parse(SAMPLE)
    assert len(tree.children) == 12


def test_parse_sample():
    """Values are typed after their field defaults"""
    cfg = parse_train_config(SAMPLE)
    assert cfg.total_iterations == 2000 and cfg.batch_size == 8
    assert cfg.lr_start == 1e-3 and cfg.lr_end == 1e-5
    assert cfg.betas == (0.9, 0.99)
    assert cfg.lambda_fft == 0.0 and isinstance(cfg.lambda_fft, float)
    assert cfg.augment is False
    assert cfg.activation == "gelu"
    assert cfg.checkpoint_dir == "runs/desk 1"
    assert cfg.model_config().base_channels == 16
    assert cfg.loss_weights().lambda_fft == 0.0


def test_empty_file_gives_defaults():
    """Omitted keys keep the reference recipe"""
    cfg = parse_train_config("")
    assert cfg == TrainConfig()
    assert cfg.total_iterations == 300_000 and cfg.batch_size == 16 and cfg.patch_size == 128
    assert (cfg.lr_start, cfg.lr_end, cfg.betas) == (2e-4, 1e-6, (0.9, 0.999))


def test_unknown_key_reports_position():
    """Keys must be field names; the message carries line:column"""
    with pytest.raises(ConfigError, match="2:1: unknown configuration key 'learning_rate'"):
        parse_train_config("batch_size = 4\nlearning_rate = 0.1\n")


def test_duplicate_key():
    """A key may appear once"""
    with pytest.raises(ConfigError, match="duplicated"):
        parse_train_config("seed = 1\nseed = 2\n")


def test_syntax_error_reports_position():
    """Lines without `=` are rejected with their location"""
    with pytest.raises(ConfigError, match="^2:"):
        parse_train_config("seed = 1\nbatch_size 4\n")


@pytest.mark.parametrize(
    "text",
    [
        "batch_size = 1.5",
        "augment = yes",
        "lr_start = fast",
        "betas = 0.9",
        "patch_size = 30",
        "lr_start = 1e-7",
        "lr_schedule = step",
        "total_iterations = -1",
        "activation = tanh",
        "lambda_fft = -0.1",
    ],
)
def test_invalid_values(text):
    """Wrongly typed or out-of-range values"""
    with pytest.raises(ConfigError):
        parse_train_config(text)


def test_dict_round_trip():
    """to_dict / from_dict restore an equal configuration"""
    cfg = TrainConfig(total_iterations=5, betas=(0.8, 0.9), enable_ff=False)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_load_from_file(tmp_path):
    """Configuration files are read as UTF-8 text"""
    path = tmp_path / "train.cfg"
    path.write_text("seed = 42\nlr_schedule = linear\n", encoding="utf-8")
    cfg = load_train_config(path)
    assert cfg.seed == 42 and cfg.lr_schedule == "linear"


def test_leading_dot_is_a_number():
    """`.5` is read as 0.5; bare paths starting with / or ~ stay words"""
    cfg = parse_train_config("lambda_fft = .5\ncheckpoint_dir = ~/runs/a\n")
    assert cfg.lambda_fft == 0.5
    assert cfg.checkpoint_dir == "~/runs/a"
    assert parse_train_config("checkpoint_dir = /tmp/x").checkpoint_dir == "/tmp/x"
