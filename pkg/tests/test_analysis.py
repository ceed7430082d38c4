import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorapl.analysis import (
    DEFAULT_SF_FLOORS,
    coefficient_progression,
    distance_bias,
    evaluate_models,
    evaluate_table,
    gateway_reception_histogram,
    lowest_feasible_sf,
    model_errors,
    reception_summary,
    rmse,
    rmse_convergence,
    sf_feasibility,
)
from lorapl.errors import EmptyInput, SizeExceedsPopulation, ValidationError
from lorapl.geo import GeoPoint
from lorapl.models import Environment, ModelSpec
from lorapl.pipeline import LinkBudget, LinkTable, Sample

T0 = datetime(2021, 1, 1, tzinfo=timezone.utc)


def sample(packet, gw, rpp):
    return Sample(packet, T0, gw, GeoPoint(50.7, 7.1, 60.0), 9, rpp, 12)


def table_for(d, pl, const=17.0):
    d = np.asarray(d, dtype=float)
    pl = np.asarray(pl, dtype=float)
    c = np.full(d.size, const)
    return LinkTable(d, np.full(d.size, 30.0), pl, c - pl, c)


# --------------------------------------------------------------------------
# RMSE and the error convention
# --------------------------------------------------------------------------

def test_rmse_hand_value():
    assert rmse([1.0, -1.0]) == 1.0
    assert rmse([3.0, 4.0]) == pytest.approx(math.sqrt(12.5))


def test_rmse_empty():
    with pytest.raises(EmptyInput):
        rmse([])


@given(st.lists(st.floats(-200, 200), min_size=1, max_size=100))
def test_rmse_matches_brute_force(errors):
    brute = math.sqrt(sum(e * e for e in errors) / len(errors))
    assert rmse(errors) == pytest.approx(brute, rel=1e-9, abs=1e-12)


def test_error_sign_convention():
    # model predicts 3 dB more loss than measured -> predicted RPP is 3 dB low -> epsilon = +3
    d = [1000.0]
    t = table_for(d, [127.0])
    eps = model_errors(t, ModelSpec.ldpl("m", 2.0, 130.0), Environment())
    assert eps[0] == pytest.approx(3.0)


def test_ground_truth_scores_zero_noiseless(clean_campaign, truth):
    rep = evaluate_models(clean_campaign.samples, clean_campaign.gateways, LinkBudget(), [truth])
    assert rep.rmse("truth") == pytest.approx(0.0, abs=1e-9)


def test_ground_truth_scores_sigma(noisy_table, truth):
    rep = evaluate_table(noisy_table, [truth])
    assert rep.rmse("truth") == pytest.approx(8.0, rel=0.02)
    assert rep.scores["truth"].count == len(noisy_table)


def test_eval_permutation_invariance(noisy_table, truth, rng):
    perm = rng.permutation(len(noisy_table))
    a = evaluate_table(noisy_table, [truth, ModelSpec.fspl()])
    b = evaluate_table(noisy_table.subset(perm), [truth, ModelSpec.fspl()])
    for name in a.scores:
        assert a.rmse(name) == pytest.approx(b.rmse(name), rel=1e-12)


def test_eval_rejects_empty():
    with pytest.raises(EmptyInput):
        evaluate_table(table_for([1000.0], [120.0]), [])
    with pytest.raises(EmptyInput):
        evaluate_models([], {}, LinkBudget(), [ModelSpec.fspl()])


def test_error_samples_iterate(noisy_table, truth):
    rep = evaluate_table(noisy_table.subset(np.arange(5)), [truth])
    rows = list(rep.error_samples("truth"))
    assert len(rows) == 5 and rows[0].model_name == "truth"


# --------------------------------------------------------------------------
# distance bias
# --------------------------------------------------------------------------

def test_bias_perfect_model(clean_campaign, truth):
    rep = evaluate_models(clean_campaign.samples, clean_campaign.gateways, LinkBudget(), [truth])
    filled = [r for r in rep.bias if not r.empty]
    assert filled
    for r in filled:
        assert abs(r.mean_db) < 1e-9
        assert abs(r.p25_db) < 1e-9 and abs(r.p75_db) < 1e-9


def test_bias_constant_offset():
    d = np.array([100.0, 600.0, 1200.0, 1300.0])
    rows = distance_bias(d, {"m": np.full(4, 3.0)}, [0, 500, 1000, 1500])
    assert [r.count for r in rows] == [1, 1, 2]
    assert all(r.mean_db == 3.0 for r in rows)


def test_bias_empty_bins_flagged():
    rows = distance_bias([100.0, 1400.0], {"m": np.array([1.0, 2.0])}, [0, 500, 1000, 1500])
    mid = rows[1]
    assert mid.empty and mid.count == 0 and math.isnan(mid.mean_db)
    assert [r.lo_m for r in rows] == [0.0, 500.0, 1000.0]


def test_bias_overflow_row():
    rows = distance_bias([100.0, 2000.0], {"m": np.array([1.0, 2.0])}, [0, 500, 1000])
    assert rows[-1].hi_m == math.inf and rows[-1].count == 1 and rows[-1].mean_db == 2.0
    assert sum(r.count for r in rows) == 2


def test_bias_iqr():
    eps = np.arange(1.0, 6.0)
    (row,) = distance_bias(np.full(5, 10.0), {"m": eps}, [0, 100])
    assert (row.p25_db, row.mean_db, row.p75_db) == (2.0, 3.0, 4.0)


def test_bias_bad_edges():
    with pytest.raises(ValidationError):
        distance_bias([1.0], {"m": np.zeros(1)}, [0, 500, 500])


# --------------------------------------------------------------------------
# coefficient progression
# --------------------------------------------------------------------------

def test_progression_constant_on_synthetic(noisy_table):
    pts = coefficient_progression(noisy_table.distance_m, noisy_table.path_loss_db, [2000, 4000, 8000, 13_000])
    assert all(p.skipped is None for p in pts)
    ns = [p.n for p in pts]
    assert max(ns) - min(ns) < 0.2
    assert all(abs(n - 2.0) < 0.1 for n in ns)
    counts = [p.sample_count for p in pts]
    assert counts == sorted(counts)


def test_progression_skips_degenerate_cap():
    d = np.array([100.0, 101.0, 2000.0, 4000.0])
    pts = coefficient_progression(d, [90.0, 90.0, 120.0, 130.0], [50, 105, 5000])
    assert pts[0].skipped and pts[0].sample_count == 0
    assert pts[1].skipped and math.isnan(pts[1].n)
    assert pts[2].skipped is None


# --------------------------------------------------------------------------
# convergence
# --------------------------------------------------------------------------

def test_convergence_full_population_has_no_spread(noisy_table):
    d, pl = noisy_table.distance_m[:2000], noisy_table.path_loss_db[:2000]
    (row,) = rmse_convergence(d, pl, [2000], repeats=5)
    assert row.n_std < 1e-12 and row.rmse_std < 1e-12 and row.repeats == 5


def test_convergence_too_large():
    with pytest.raises(SizeExceedsPopulation):
        rmse_convergence([100.0, 200.0], [1.0, 2.0], [3])


def test_convergence_deterministic(noisy_table):
    d, pl = noisy_table.distance_m, noisy_table.path_loss_db
    a = rmse_convergence(d, pl, [500, 2000], repeats=5, seed=7)
    b = rmse_convergence(d, pl, [500, 2000], repeats=5, seed=7)
    c = rmse_convergence(d, pl, [500, 2000], repeats=5, seed=8)
    assert a == b and a != c


def test_convergence_rmse_near_sigma(noisy_table):
    rows = rmse_convergence(noisy_table.distance_m, noisy_table.path_loss_db, [1000, 16_000], repeats=10)
    for r in rows:
        assert r.rmse_mean == pytest.approx(8.0, rel=0.05)
    assert rows[1].n_std < rows[0].n_std


def test_convergence_rmse_on_subset_flag(noisy_table):
    with pytest.raises(ValidationError):
        rmse_convergence(noisy_table.distance_m, noisy_table.path_loss_db, [100], rmse_on="bogus")
    (row,) = rmse_convergence(noisy_table.distance_m, noisy_table.path_loss_db, [1000], repeats=3, rmse_on="subset")
    assert 6.0 < row.rmse_mean < 10.0


# --------------------------------------------------------------------------
# packet-level statistics
# --------------------------------------------------------------------------

def test_histogram_every_packet_three_gateways():
    s = [sample(f"p{i}", g, -100.0) for i in range(4) for g in ("a", "b", "c")]
    hist = gateway_reception_histogram(s)
    assert hist == {3: 1.0}
    assert reception_summary(hist) == (3.0, 1.0)


def test_histogram_mixed():
    s = [sample("p1", "a", -100.0), sample("p2", "a", -100.0), sample("p2", "b", -99.0),
         sample("p3", "a", -100.0), sample("p3", "b", -100.0), sample("p3", "c", -100.0)]
    hist = gateway_reception_histogram(s)
    assert hist == {1: pytest.approx(1 / 3), 2: pytest.approx(1 / 3), 3: pytest.approx(1 / 3)}
    mean, multi = reception_summary(hist)
    assert mean == pytest.approx(2.0) and multi == pytest.approx(2 / 3)


def test_histogram_duplicate_gateway_counted_once():
    s = [sample("p1", "a", -100.0), sample("p1", "a", -101.0)]
    assert gateway_reception_histogram(s) == {1: 1.0}


def test_sf_feasibility():
    strong = [sample("p1", "a", -100.0)]
    assert sf_feasibility(strong) == 1.0
    assert lowest_feasible_sf(-100.0) == 7
    weak = [sample("p1", "a", -140.0)]
    assert sf_feasibility(weak, sf=12) == 0.0
    assert lowest_feasible_sf(-140.0) is None


def test_sf_feasibility_uses_best_reception():
    s = [sample("p1", "a", -130.0), sample("p1", "b", -122.0), sample("p2", "a", -125.0)]
    assert sf_feasibility(s, sf=7) == 0.5
    assert lowest_feasible_sf(-125.0) == 8
    assert lowest_feasible_sf(DEFAULT_SF_FLOORS[11]) == 11


def test_sf_feasibility_incomplete_table():
    with pytest.raises(ValidationError):
        sf_feasibility([sample("p1", "a", -100.0)], {7: -123.0})
