from __future__ import annotations

from pathlib import Path

import pytest

from fair_meta_dg.domain.model import FairnessVariant, Method, SamplingMode
from fair_meta_dg.infrastructure.config import (
    OUT_DIR_ENV,
    dump_config,
    fingerprint,
    load_config,
    parse_lines,
)
from fair_meta_dg.infrastructure.exceptions import (
    ConfigError,
    ConfigValueError,
    UnknownConfigKeyError,
)


def test_parse_lines_skips_comments_and_blanks():
    pairs = parse_lines(["# header", "", "seed = 3  # trailing", "meta.alpha=0.01"])

    assert pairs == [("seed", "3"), ("meta.alpha", "0.01")]


def test_line_without_equals_is_rejected():
    with pytest.raises(ConfigValueError):
        parse_lines(["seed 3"])


def test_load_config_file_and_overrides(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "method = erm_fc\nseed = 4\nmeta.hidden = 8,8,8\ndata.sampling_mode = per_domain\n",
        encoding="utf-8",
    )

    config = load_config(path, ["fewshot = 5", "fairness_variant = literal"], environ={})

    assert config.method == Method.ERM_FC
    assert config.seed == config.stage1.seed == config.meta.seed == config.erm.seed == 4
    assert config.meta.hidden == (8, 8, 8)
    assert config.meta.sampling_mode == SamplingMode.PER_DOMAIN
    assert config.fewshot == 5
    assert config.meta.variant == config.erm.variant == FairnessVariant.LITERAL


def test_dotted_seed_wins_over_top_level_seed():
    config = load_config(None, ["stage1.seed = 9", "seed = 2"], environ={})

    assert config.seed == 2
    assert config.stage1.seed == 9


def test_unknown_key_is_rejected():
    with pytest.raises(UnknownConfigKeyError):
        load_config(None, ["meta.learning_rate = 1"], environ={})


@pytest.mark.parametrize(
    "override",
    ["seed = abc", "method = svm", "meta.alpha = -1", "meta.hidden = 4", "fewshot = 0"],
)
def test_invalid_values_are_rejected(override):
    with pytest.raises(ConfigValueError):
        load_config(None, [override], environ={})


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.cfg", environ={})


def test_output_dir_environment_override():
    config = load_config(None, ["output_dir = a"], environ={OUT_DIR_ENV: "/tmp/elsewhere"})

    assert config.output_dir == Path("/tmp/elsewhere")


def test_dump_round_trips(tmp_path):
    config = load_config(None, ["method = abs1", "duals.gamma1 = 0.2", "meta.iterations = 7"], environ={})
    path = tmp_path / "dump.cfg"
    path.write_text(dump_config(config), encoding="utf-8")

    assert load_config(path, environ={}) == config


def test_fingerprint_ignores_output_dir():
    a = load_config(None, ["output_dir = a"], environ={})
    b = load_config(None, ["output_dir = b"], environ={})
    c = load_config(None, ["output_dir = a", "seed = 1"], environ={})

    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint(c)
