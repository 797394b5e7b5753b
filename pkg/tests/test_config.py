"""key = value config parsing."""

import pytest

from spixel.config import load_config, parse_config_text
from spixel.errors import ConfigError


def test_full_config(tmp_path):
    text = """
    # model
    s = 8
    widths = 16, 32, 64
    d = 8
    variant = pnbor
    use_ai = true

    lr = 3e-3          # training
    batch = 4
    total_iters = 600
    stage1_iters = 450
    lambda = 0.0001875
    alpha = 0.5
    seed = 7
    size = 64
    regions = 6
    p_replace = 0.1
    aug_shift = false
    """
    path = tmp_path / "c.cfg"
    path.write_text(text, encoding="utf-8")
    bundle = load_config(path)
    assert bundle.model.S == 8
    assert bundle.model.widths == (16, 32, 64)
    assert bundle.model.variant == "pnbor"
    assert bundle.train.lr == pytest.approx(3e-3)
    assert bundle.train.position_weight == pytest.approx(0.0001875)
    assert bundle.train.boundary_weight == 0.5
    assert bundle.train.seed == 7
    assert bundle.train.augment.p_replace == pytest.approx(0.1)
    assert bundle.train.augment.shift is False
    assert bundle.train.augment.shuffle is True
    assert bundle.size == 64
    assert bundle.regions == 6


def test_unknown_key_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("mystery = 1\n", source="t.cfg")
    assert "mystery" in str(exc.value)
    assert "t.cfg:1" in str(exc.value)


def test_malformed_line_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("just some words\n")


def test_bad_value_type():
    with pytest.raises(ConfigError):
        parse_config_text("batch = lots\n")


def test_bad_bool():
    with pytest.raises(ConfigError):
        parse_config_text("use_ai = maybe\n")


def test_crop_divisibility_enforced():
    with pytest.raises(ConfigError):
        load_values = parse_config_text("s = 8\ncrop = 20\n")
        from spixel.config import bundle_from_values

        bundle_from_values(load_values)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.cfg")


def test_defaults_when_empty():
    from spixel.config import bundle_from_values

    bundle = bundle_from_values({})
    assert bundle.model.S == 8
    assert bundle.train.batch == 4
    assert bundle.regions == 6
