from pathlib import Path

import pandas as pd
import pytest

from fair_meta_dg.domain.model import AVERAGE_ROW
from fair_meta_dg.infrastructure.config import dump_config
from fair_meta_dg.main import cli_main
from tests.support import tiny_config


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "tiny.cfg"
    path.write_text(dump_config(tiny_config(output_dir=tmp_path / "out")), encoding="utf-8")
    return path


def _run(*argv: str | Path) -> int:
    return cli_main([str(a) for a in argv] + ["--log-level", "WARNING"])


def test_synth_is_byte_reproducible(tmp_path: Path):
    for name in ("a", "b"):
        code = _run(
            "synth",
            "--set", "data.per_domain_count=40",
            "--set", "data.content_dim=2",
            "--set", "data.style_dim=2",
            "--set", "data.sensitive_dim=2",
            "--set", "data.feature_dim=6",
            "--seed", "7",
            "--out", tmp_path / name,
        )
        assert code == 0

    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == [
        "domain_0.latents.csv",
        "domain_1.latents.csv",
        "domain_2.latents.csv",
        "schema.txt",
        "synthetic.csv",
    ]
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    frame = pd.read_csv(tmp_path / "a" / "synthetic.csv")
    assert len(frame) == 120
    assert len([c for c in frame.columns if c.startswith("x")]) == 6


def test_lodo_writes_report_files(config_file: Path, tmp_path: Path):
    code = _run("lodo", "--config", config_file, "--method", "erm_fc")

    assert code == 0
    out = tmp_path / "out"
    for name in ("results.csv", "results.jsonl", "history.jsonl", "config.cfg"):
        assert (out / name).exists(), name
    frame = pd.read_csv(out / "results.csv")
    assert list(frame["held_out_domain"])[-1] == AVERAGE_ROW
    assert set(frame["method"]) == {"erm_fc"}


def test_stagewise_commands_chain(config_file: Path, tmp_path: Path):
    stage1 = tmp_path / "stage1.ckpt"
    classifier = tmp_path / "classifier.ckpt"
    adapted = tmp_path / "adapted.ckpt"
    held_out = "domain_1"

    assert _run("train-disentangler", "--config", config_file, "--held-out", held_out, "--out", stage1) == 0
    assert stage1.exists()
    assert stage1.with_suffix(".history.jsonl").exists()

    assert (
        _run(
            "meta-train",
            "--config", config_file,
            "--stage1", stage1,
            "--held-out", held_out,
            "--out", classifier,
        )
        == 0
    )
    assert classifier.exists()

    assert (
        _run(
            "adapt",
            "--config", config_file,
            "--classifier", classifier,
            "--stage1", stage1,
            "--domain", held_out,
            "--out", adapted,
        )
        == 0
    )
    assert adapted.exists()

    report_dir = tmp_path / "eval"
    assert (
        _run(
            "evaluate",
            "--config", config_file,
            "--classifier", adapted,
            "--domain", held_out,
            "--out", report_dir,
        )
        == 0
    )
    frame = pd.read_csv(report_dir / "evaluation.csv")
    assert list(frame["held_out_domain"]) == [held_out, AVERAGE_ROW]
    assert 0.0 <= frame["accuracy"].iloc[0] <= 1.0


def test_feed_adaptation_without_stage1_fails(config_file: Path, tmp_path: Path, capsys):
    classifier = tmp_path / "classifier.ckpt"
    assert _run("meta-train", "--config", config_file, "--out", classifier) == 0
    capsys.readouterr()

    code = _run(
        "adapt", "--config", config_file, "--classifier", classifier, "--domain", "domain_0"
    )

    assert code == 1
    assert "error: CheckpointFormatError" in capsys.readouterr().err


def test_missing_config_file_exits_1(tmp_path: Path, capsys):
    code = _run("lodo", "--config", tmp_path / "nope.cfg")

    assert code == 1
    last = capsys.readouterr().err.strip().splitlines()[-1]
    assert last.startswith("error: ConfigError")


def test_unknown_config_key_exits_1(capsys):
    code = _run("synth", "--set", "meta.gamma=0.3")

    assert code == 1
    assert "error: UnknownConfigKeyError" in capsys.readouterr().err


def test_bad_usage_exits_2():
    assert cli_main(["train-everything"]) == 2
    assert cli_main(["adapt", "--domain", "domain_0"]) == 2
