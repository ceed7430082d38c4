import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorapl.errors import OutOfValidityRange, ValidationError
from lorapl.geo import LinkGeometry
from lorapl.models import (
    BONN,
    OULU,
    CityClass,
    DualSlopeParams,
    Environment,
    LdplParams,
    ModelKind,
    ModelSpec,
    load_catalog,
    path_loss,
    predict,
    sample_with_shadowing,
    save_catalog,
)

ENV = Environment(freq_mhz=868.0, h_gw=30.0, h_sensor=1.5)
L = math.log10


def link(d, h_gw=30.0, h_sensor=1.5):
    return LinkGeometry(d, h_gw, h_sensor)


def quiet_predict(model, lk, env=ENV):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutOfValidityRange)
        return predict(model, lk, env)


ALL_KINDS = [
    ModelSpec.fspl(),
    OULU,
    BONN,
    ModelSpec("ghent-like", ModelKind.DUAL_SLOPE, DualSlopeParams(2.0, 3.5, 120.0, 100.0, 1500.0)),
    ModelSpec("okumura", ModelKind.OKUMURA_HATA),
    ModelSpec("cost", ModelKind.COST_HATA),
    ModelSpec("egli", ModelKind.EGLI),
    ModelSpec("ecc33", ModelKind.ECC33),
    ModelSpec("winner", ModelKind.WINNER_PLUS_UMA_NLOS),
]


def test_fspl_one_km():
    # 32.45 + 0 + 20*log10(868)
    assert quiet_predict(ModelSpec.fspl(), link(1000)) == pytest.approx(91.22, abs=0.01)


def test_oulu_at_reference_distance():
    assert quiet_predict(OULU, link(1000)) == pytest.approx(132.25, abs=1e-12)


def test_oulu_at_ten_km():
    assert quiet_predict(OULU, link(10_000)) == pytest.approx(158.75, abs=0.01)


def test_bonn_at_reference_distance():
    assert quiet_predict(BONN, link(1000)) == pytest.approx(132.41, abs=1e-12)


def test_okumura_hata_reference():
    f, hb, hm = 868.0, 30.0, 1.5
    a_hm = (1.1 * L(f) - 0.7) * hm - (1.56 * L(f) - 0.8)
    oracle = 69.55 + 26.16 * L(f) - 13.82 * L(hb) - a_hm
    assert oracle == pytest.approx(125.99, abs=0.05)
    got = quiet_predict(ModelSpec("o", ModelKind.OKUMURA_HATA), link(1000))
    assert got == pytest.approx(125.99, abs=0.05)


def test_winner_plus_reference():
    oracle = (44.9 - 6.55 * L(30)) * 3 + 34.46 + 5.83 * L(30) + 23 * L(0.868 / 5)
    assert oracle == pytest.approx(131.26, abs=0.1)
    assert quiet_predict(ModelSpec("w", ModelKind.WINNER_PLUS_UMA_NLOS), link(1000)) == pytest.approx(131.26, abs=0.1)


@pytest.mark.parametrize("city, offset", [(CityClass.MEDIUM_SMALL, 0.0), (CityClass.METROPOLITAN, 3.0)])
def test_cost_hata_against_hand_evaluation(city, offset):
    f, hb, hm, dkm = 868.0, 30.0, 1.5, 3.0
    a_hm = (1.1 * L(f) - 0.7) * hm - (1.56 * L(f) - 0.8)
    oracle = 46.3 + 33.9 * L(f) - 13.82 * L(hb) - a_hm + (44.9 - 6.55 * L(hb)) * L(dkm) + offset
    env = Environment(868.0, 30.0, 1.5, city)
    assert quiet_predict(ModelSpec("c", ModelKind.COST_HATA), link(3000), env) == pytest.approx(oracle, abs=1e-9)


def test_egli_against_hand_evaluation():
    oracle = 20 * L(868) + 40 * L(2.5) - 20 * L(30) + 76.3 - 10 * L(1.5)
    assert quiet_predict(ModelSpec("e", ModelKind.EGLI), link(2500)) == pytest.approx(oracle, abs=1e-9)


def test_ecc33_against_hand_evaluation():
    fg, d, hb, hm = 0.868, 2.0, 30.0, 1.5
    afs = 92.4 + 20 * L(d) + 20 * L(fg)
    abm = 20.41 + 9.83 * L(d) + 7.894 * L(fg) + 9.56 * L(fg) ** 2
    gb = L(hb / 200) * (13.958 + 5.8 * L(d) ** 2)
    gr = (42.57 + 13.7 * L(fg)) * (L(hm) - 0.585)
    oracle = afs + abm - gb - gr
    assert quiet_predict(ModelSpec("x", ModelKind.ECC33), link(2000)) == pytest.approx(oracle, abs=1e-9)


@pytest.mark.parametrize("model", ALL_KINDS, ids=lambda m: m.name)
def test_monotone_in_distance(model):
    d = np.geomspace(100, 13_000, 400)
    pl = path_loss(model, d, 30.0, 2.0, 868.1, warn=False)
    assert np.all(np.diff(pl) >= 0)


@given(st.floats(10.0, 1e5))
def test_fspl_twenty_db_per_decade(d):
    m = ModelSpec.fspl()
    diff = path_loss(m, 10 * d, warn=False) - path_loss(m, d, warn=False)
    assert float(diff) == pytest.approx(20.0, abs=1e-9)


@given(st.floats(0.5, 5.0), st.floats(10.0, 1e5))
def test_ldpl_slope_is_ten_n(n, d):
    m = ModelSpec.ldpl("x", n, 130.0)
    diff = path_loss(m, 10 * d, warn=False) - path_loss(m, d, warn=False)
    assert float(diff) == pytest.approx(10 * n, abs=1e-9)


def test_dual_slope_continuous_at_break():
    p = DualSlopeParams(n1=2.1, n2=3.7, pl_d0=110.0, d0=100.0, d_break=1234.0)
    m = ModelSpec("ds", ModelKind.DUAL_SLOPE, p)
    eps = 1e-9
    left = path_loss(m, p.d_break * (1 - eps), warn=False)
    right = path_loss(m, p.d_break * (1 + eps), warn=False)
    at = path_loss(m, p.d_break, warn=False)
    assert abs(float(left - right)) < 1e-6
    assert abs(float(at - right)) < 1e-6
    # slopes on each side
    assert float(path_loss(m, 1000.0, warn=False) - path_loss(m, 100.0, warn=False)) == pytest.approx(21.0)
    assert float(path_loss(m, 20_000.0, warn=False) - path_loss(m, 2000.0, warn=False)) == pytest.approx(37.0)


def test_cost_hata_warns_at_868_but_returns_value():
    with pytest.warns(OutOfValidityRange):
        v = predict(ModelSpec("c", ModelKind.COST_HATA), link(2000), ENV)
    assert math.isfinite(v)


def test_fspl_never_warns():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        predict(ModelSpec.fspl(), link(50), ENV)


def test_predict_is_pure():
    lk = link(3456.0)
    first = [quiet_predict(m, lk) for m in ALL_KINDS]
    second = [quiet_predict(m, lk) for m in reversed(ALL_KINDS)][::-1]
    assert first == second


def test_shadowing_zero_sigma_is_median():
    m = ModelSpec.ldpl("x", 2.0, 130.0)
    assert sample_with_shadowing(m, link(2000), ENV, 7) == predict(m, link(2000), ENV)


def test_shadowing_seeded():
    assert sample_with_shadowing(BONN, link(2000), ENV, 99) == sample_with_shadowing(BONN, link(2000), ENV, 99)


def test_shadowing_moments():
    draws = sample_with_shadowing(BONN, link(2000), ENV, 3, size=100_000)
    median = predict(BONN, link(2000), ENV)
    assert abs(draws.mean() - median) < 0.1
    assert draws.std() == pytest.approx(9.9, rel=0.02)


def test_ldpl_reparameterization():
    p = LdplParams(1.58, 132.41, 1000.0)
    q = p.with_d0(100.0)
    assert q.pl_d0 == pytest.approx(132.41 - 15.8, abs=1e-12)
    m1, m2 = ModelSpec("a", ModelKind.LDPL, p), ModelSpec("b", ModelKind.LDPL, q)
    d = np.geomspace(50, 13_000, 20)
    np.testing.assert_allclose(path_loss(m1, d), path_loss(m2, d), atol=1e-9)


@pytest.mark.parametrize("kwargs", [dict(n=2, pl_d0=130, d0=0), dict(n=2, pl_d0=130, sigma=-1),
                                    dict(n=float("inf"), pl_d0=130)])
def test_ldpl_params_invariants(kwargs):
    with pytest.raises(ValidationError):
        LdplParams(**kwargs)


def test_dual_slope_requires_break_beyond_d0():
    with pytest.raises(ValidationError):
        DualSlopeParams(2, 3, 120, 100, 100)


def test_spec_kind_parameter_mismatch():
    with pytest.raises(ValidationError):
        ModelSpec("x", ModelKind.LDPL)
    with pytest.raises(ValidationError):
        ModelSpec("x", ModelKind.FSPL, LdplParams(2, 130))


def test_default_catalog_contents():
    with pytest.warns(UserWarning, match="coefficients not configured"):
        cat = load_catalog()
    names = {m.name for m in cat}
    assert {"FSPL", "Oulu", "Bonn", "Okumura", "COST", "Egli", "ECC33", "Winner+"} <= names
    assert "Dortmund" not in names


def test_catalog_round_trip(tmp_path):
    models = [m for m in ALL_KINDS]
    path = tmp_path / "cat.json"
    save_catalog(models, path)
    assert load_catalog(path) == models
    records = json.loads(path.read_text())
    assert {r["variant"] for r in records} == {k.value for k in ModelKind}


def test_catalog_rejects_duplicates(tmp_path):
    path = tmp_path / "cat.json"
    save_catalog([ModelSpec.fspl("a"), ModelSpec.fspl("a")], path)
    with pytest.raises(ValidationError):
        load_catalog(path)
