import math

import pytest

import perfhom


def test_default_config_round_trip():
    cfg = perfhom.default_config("T1a", 2)
    assert cfg["tag"] == "T1a"
    assert cfg["dim"] == 2
    assert perfhom.validate_layout(cfg, cfg["eps"][0])["pass"]


def test_predicted_bound():
    assert perfhom.predicted_bound("T1a", 1 / 16) == pytest.approx(0.3125)
    assert perfhom.predicted_bound("T2", 1 / 16, kappa=0.25) == pytest.approx(0.5)


def test_fit_rate():
    fit = perfhom.fit_rate([(e, 3 * e**0.5) for e in (1 / 8, 1 / 16, 1 / 32)])
    assert fit["slope"] == pytest.approx(0.5)


def test_errors_carry_codes():
    with pytest.raises(perfhom.PerfhomError) as info:
        perfhom.fit_rate([(1.0, 1.0), (0.5, 0.5)])
    assert info.value.code == "insufficient-points"
    with pytest.raises(perfhom.PerfhomError) as info:
        perfhom.predicted_bound("T2", 0.1)
    assert info.value.code == "tag-mismatch"


def test_s_norm_constant():
    value = perfhom.s_norm_constant(1.0, 1 / 32)
    assert value == pytest.approx(1 / math.tanh(0.5), rel=0.02)
    assert perfhom.s_norm_constant(0.0, 1 / 32) == 0.0


def test_small_study():
    cfg = perfhom.default_config("T3a", 2)
    cfg["eps"] = [1 / 4, 1 / 6, 1 / 8]
    cfg["mesh"]["h"] = 0.1
    report = perfhom.run_study(cfg)
    assert len(report["rows"]) == 3
    assert all(row["h1"] > 0 for row in report["rows"])
