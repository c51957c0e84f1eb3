"""Test the command line entrance"""
import numpy as np
import pytest

from msprl.__main__ import main
from msprl.image import load_image

TINY_RUN = """
total_iterations = 2
batch_size = 2
patch_size = 16
min_side = 16
base_channels = 4
rb_per_block = 1
validation_interval = 0
checkpoint_interval = 0
"""


@pytest.fixture
def corpus(make_corpus):
    """Three 32 x 32 training images"""
    return make_corpus(3, 32, 32)


@pytest.fixture
def tiny_run(tmp_path):
    """Configuration file for a two-step run"""
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_RUN, encoding="utf-8")
    return path


def test_halftone_is_binary(corpus, tmp_path):
    """The halftone command writes a P5 image with only 0 and 255"""
    output = tmp_path / "half.pgm"
    assert main(["halftone", "--input", str(corpus / "img000.pgm"), "--output", str(output)]) == 0
    assert output.read_bytes().startswith(b"P5\n32 32\n255\n")
    assert set(np.unique(load_image(output).pixels)) <= {0.0, 1.0}


def test_restore_with_baseline(corpus, tmp_path):
    """Gaussian restoration keeps the image size"""
    half = tmp_path / "half.pgm"
    restored = tmp_path / "restored.pgm"
    main(["halftone", "--input", str(corpus / "img001.pgm"), "--output", str(half)])
    argv = ["restore", "--baseline", "gaussian", "--input", str(half), "--output", str(restored)]
    assert main(argv) == 0
    assert load_image(restored).pixels.shape == (32, 32)


def test_restore_needs_a_model(corpus, tmp_path):
    """Without checkpoint or baseline the command fails with exit code 1"""
    argv = ["restore", "--input", str(corpus / "img000.pgm"), "--output", str(tmp_path / "x.pgm")]
    assert main(argv) == 1


def test_missing_input_fails(tmp_path):
    """Unreadable files are reported, not raised"""
    argv = ["halftone", "--input", str(tmp_path / "absent.pgm"), "--output", str(tmp_path / "o")]
    assert main(argv) == 1


def test_summary_blocks_add_up(tiny_run, capsys):
    """Per-block counts sum to the printed total"""
    assert main(["summary", "--config", str(tiny_run)]) == 0
    lines = capsys.readouterr().out.splitlines()
    name, total = lines[-1].split()
    assert name == "total"
    assert sum(int(line.split()[1]) for line in lines[:-1]) == int(total)
    assert lines[0].split()[0] == "head"


def test_evaluate_baseline_writes_csv(corpus, tmp_path, capsys):
    """One CSV row per image plus the MEAN row"""
    report = tmp_path / "report.csv"
    argv = ["evaluate", "--baseline", "gaussian", "--data", str(corpus), "--csv", str(report)]
    assert main(argv) == 0
    rows = report.read_text(encoding="utf-8").splitlines()
    assert rows[0] == "path,psnr_db,ssim" and len(rows) == 5
    assert rows[-1].startswith("MEAN,")
    assert capsys.readouterr().out.startswith("MEAN psnr_db=")


def test_train_evaluate_and_dump(corpus, tiny_run, tmp_path):
    """A trained checkpoint feeds evaluation and feature dumps"""
    out = tmp_path / "run"
    argv = ["train", "--config", str(tiny_run), "--data", str(corpus), "--out", str(out)]
    assert main(argv) == 0
    checkpoint = out / "final.msprl"
    assert checkpoint.is_file()

    assert main(["evaluate", "--checkpoint", str(checkpoint), "--data", str(corpus)]) == 0

    features = tmp_path / "features"
    argv = [
        "dump-features",
        "--checkpoint",
        str(checkpoint),
        "--input",
        str(corpus / "img002.pgm"),
        "--layer",
        "DB1",
        "--out",
        str(features),
    ]
    assert main(argv) == 0
    names = sorted(path.name for path in features.iterdir())
    assert names == [f"DB1-ch{channel:03d}.pgm" for channel in range(4)]


def test_unknown_ablation_grid(corpus, tmp_path):
    """Only the SFE x FF grid is supported"""
    argv = ["ablate", "--grid", "sfe", "--data", str(corpus), "--csv", str(tmp_path / "a.csv")]
    assert main(argv) == 1


def test_usage_errors_exit_with_two():
    """Missing required options are argparse errors"""
    with pytest.raises(SystemExit) as info:
        main(["restore"])
    assert info.value.code == 2


def test_help_shows_defaults(capsys):
    """Subcommand help lists default values"""
    with pytest.raises(SystemExit) as info:
        main(["evaluate", "--help"])
    assert info.value.code == 0
    assert "(default: 16)" in capsys.readouterr().out
