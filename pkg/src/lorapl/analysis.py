"""Model-versus-measurement comparison and campaign statistics."""
from __future__ import annotations

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from . import _accel
from .errors import DegenerateInput, EmptyInput, SizeExceedsPopulation, ValidationError
from .fitting import Binning, fit_ldpl
from .models import Environment, ModelSpec, path_loss, validity_issues
from .pipeline import Gateway, LinkBudget, LinkTable, Sample, link_table

# dBm at 125 kHz
DEFAULT_SF_FLOORS = {7: -123.0, 8: -126.0, 9: -129.0, 10: -132.0, 11: -134.5, 12: -137.0}
DEFAULT_BIAS_EDGES = tuple(float(x) for x in range(0, 13_001, 500))
DEFAULT_CONVERGENCE_SEED = 20_210_607


@dataclass(frozen=True)
class ErrorSample:
    model_name: str
    distance_m: float
    epsilon_db: float


@dataclass
class ModelScore:
    name: str
    rmse_db: float
    count: int
    mean_error_db: float
    validity_warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class BiasRow:
    model: str
    lo_m: float
    hi_m: float
    count: int
    mean_db: float
    p25_db: float
    p75_db: float

    @property
    def empty(self) -> bool:
        return self.count == 0


@dataclass
class EvalReport:
    distance_m: np.ndarray
    errors: dict[str, np.ndarray]
    scores: dict[str, ModelScore]
    bias: list[BiasRow]

    def error_samples(self, model_name: str) -> Iterator[ErrorSample]:
        for d, e in zip(self.distance_m, self.errors[model_name]):
            yield ErrorSample(model_name, float(d), float(e))

    def rmse(self, model_name: str) -> float:
        return self.scores[model_name].rmse_db


def rmse(errors) -> float:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise EmptyInput("no errors")
    return math.sqrt(_accel.sum_squares(e) / e.size)


def model_errors(table: LinkTable, model: ModelSpec, env: Environment, warn: bool = False) -> np.ndarray:
    """epsilon = measured RPP - predicted RPP, one value per sample."""
    pl = path_loss(model, table.distance_m, table.h_gw, env.h_sensor, env.freq_mhz, env.city_class, warn=warn)
    return table.rpp_dbm - (table.link_const_db - pl)


def evaluate_table(table: LinkTable, catalog: Sequence[ModelSpec], env: Environment = Environment(),
                   bin_edges: Sequence[float] = DEFAULT_BIAS_EDGES) -> EvalReport:
    if len(table) == 0:
        raise EmptyInput("no samples to evaluate")
    if not catalog:
        raise EmptyInput("empty model catalog")
    errors: dict[str, np.ndarray] = {}
    scores: dict[str, ModelScore] = {}
    for model in catalog:
        issues = validity_issues(model, table.distance_m, table.h_gw, env.h_sensor, env.freq_mhz)
        eps = model_errors(table, model, env)
        errors[model.name] = eps
        scores[model.name] = ModelScore(model.name, rmse(eps), int(eps.size), float(eps.mean()), issues)
    bias = distance_bias(table.distance_m, errors, bin_edges)
    return EvalReport(table.distance_m, errors, scores, bias)


def evaluate_models(samples: list[Sample], gateways: Mapping[str, Gateway], budget: LinkBudget,
                    catalog: Sequence[ModelSpec], env: Environment = Environment(),
                    bin_edges: Sequence[float] = DEFAULT_BIAS_EDGES) -> EvalReport:
    if not samples:
        raise EmptyInput("no samples to evaluate")
    return evaluate_table(link_table(samples, gateways, budget), catalog, env, bin_edges)


def distance_bias(distance_m, errors: Mapping[str, np.ndarray], edges: Sequence[float]) -> list[BiasRow]:
    """Mean and interquartile range of epsilon per distance bin.

    Negative means the model overestimates RPP. Empty bins are emitted with
    ``count=0`` and NaN statistics; samples past the last edge land in an
    overflow row ending at infinity.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValidationError("bin edges must be strictly increasing with at least two entries")
    d = np.asarray(distance_m, dtype=np.float64)
    if d.size == 0:
        raise EmptyInput("no samples")
    idx = np.searchsorted(edges, d, side="right") - 1
    lows = list(edges[:-1])
    highs = list(edges[1:])
    overflow = bool(np.any(d >= edges[-1]))
    if overflow:
        lows.append(float(edges[-1]))
        highs.append(math.inf)
    rows = []
    for name, eps in errors.items():
        eps = np.asarray(eps, dtype=np.float64)
        for b, (lo, hi) in enumerate(zip(lows, highs)):
            sel = eps[idx == b]
            if sel.size:
                q25, q75 = np.percentile(sel, [25, 75])
                rows.append(BiasRow(name, float(lo), float(hi), int(sel.size), float(sel.mean()), float(q25), float(q75)))
            else:
                rows.append(BiasRow(name, float(lo), float(hi), 0, math.nan, math.nan, math.nan))
    return rows


@dataclass(frozen=True)
class ProgressionPoint:
    max_distance_m: float
    n: float
    pl_d0: float
    sigma: float
    sample_count: int
    skipped: str | None = None


def coefficient_progression(distance_m, path_loss_db, max_distances: Iterable[float], d0: float = 1000.0,
                            bin_width_m: float = 10.0) -> list[ProgressionPoint]:
    """Refit the one-slope model on samples with distance <= D for each D."""
    d = np.asarray(distance_m, dtype=np.float64)
    pl = np.asarray(path_loss_db, dtype=np.float64)
    out = []
    for cap in max_distances:
        mask = d <= cap
        count = int(mask.sum())
        try:
            if count == 0:
                raise DegenerateInput("no samples within range")
            fit = fit_ldpl(Binning(d[mask], pl[mask], bin_width_m), d0)
        except DegenerateInput as exc:
            out.append(ProgressionPoint(float(cap), math.nan, math.nan, math.nan, count, str(exc)))
            continue
        p = fit.params
        out.append(ProgressionPoint(float(cap), p.n, p.pl_d0, p.sigma, count))
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    subset_size: int
    repeats: int
    rmse_mean: float
    rmse_std: float
    n_mean: float
    n_std: float
    pl_d0_mean: float
    pl_d0_std: float


def _spread(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.std(ddof=1)) if v.size > 1 else 0.0


def rmse_convergence(distance_m, path_loss_db, subset_sizes: Iterable[int], repeats: int = 20,
                     seed: int = DEFAULT_CONVERGENCE_SEED, d0: float = 1000.0, bin_width_m: float = 10.0,
                     rmse_on: str = "full") -> list[ConvergenceRow]:
    """Fit on random subsets of size k and score each fit.

    Subsets are drawn uniformly without replacement, one derived seed per
    (size, repeat). ``rmse_on="full"`` scores every fit against the whole
    population; ``"subset"`` scores it against its own subset.
    """
    d = np.asarray(distance_m, dtype=np.float64)
    pl = np.asarray(path_loss_db, dtype=np.float64)
    pop = d.size
    if rmse_on not in ("full", "subset"):
        raise ValidationError(f"rmse_on must be 'full' or 'subset', got {rmse_on!r}")
    sizes = [int(k) for k in subset_sizes]
    for k in sizes:
        if k > pop:
            raise SizeExceedsPopulation(f"subset size {k} exceeds population {pop}")
        if k < 2:
            raise ValidationError("subset sizes must be >= 2")
    log_ratio = np.log10(d / d0)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    rows = []
    for k, ss in zip(sizes, seeds):
        rmses, ns, pls = [], [], []
        for child in ss.spawn(repeats):
            rng = np.random.default_rng(child)
            idx = rng.choice(pop, size=k, replace=False) if k < pop else np.arange(pop)
            try:
                fit = fit_ldpl(Binning(d[idx], pl[idx], bin_width_m), d0)
            except DegenerateInput:
                continue
            n, b = fit.params.n, fit.params.pl_d0
            if rmse_on == "full":
                resid = pl - (b + 10.0 * n * log_ratio)
            else:
                resid = fit.residuals
            rmses.append(math.sqrt(_accel.sum_squares(resid) / resid.size))
            ns.append(n)
            pls.append(b)
        if not ns:
            warnings.warn(f"every subset of size {k} was degenerate", stacklevel=2)
            rows.append(ConvergenceRow(k, 0, *(math.nan,) * 6))
            continue
        rows.append(ConvergenceRow(
            k, len(ns),
            float(np.mean(rmses)), _spread(rmses),
            float(np.mean(ns)), _spread(ns),
            float(np.mean(pls)), _spread(pls),
        ))
    return rows


def gateway_reception_histogram(samples: Iterable[Sample]) -> dict[int, float]:
    """Share of packets received by exactly k distinct gateways."""
    heard: dict[str, set] = defaultdict(set)
    for s in samples:
        heard[s.packet_id].add(s.gateway_id)
    if not heard:
        return {}
    counts = np.bincount([len(g) for g in heard.values()])
    total = len(heard)
    return {k: c / total for k, c in enumerate(counts.tolist()) if c}


def reception_summary(histogram: Mapping[int, float]) -> tuple[float, float]:
    """(mean receiving gateways per packet, share of packets heard by >= 2)."""
    mean = sum(k * share for k, share in histogram.items())
    multi = sum(share for k, share in histogram.items() if k >= 2)
    return mean, multi


def best_rpp_per_packet(samples: Iterable[Sample]) -> dict[str, float]:
    best: dict[str, float] = {}
    for s in samples:
        cur = best.get(s.packet_id)
        if cur is None or s.rpp > cur:
            best[s.packet_id] = s.rpp
    return best


def sf_feasibility(samples: Iterable[Sample], sensitivity: Mapping[int, float] = DEFAULT_SF_FLOORS,
                   sf: int = 7) -> float:
    """Share of packets whose strongest reception clears the demodulation floor of ``sf``."""
    missing = [k for k in range(7, 13) if k not in sensitivity]
    if missing:
        raise ValidationError(f"sensitivity table lacks SF {missing}")
    best = best_rpp_per_packet(samples)
    if not best:
        raise EmptyInput("no packets")
    floor = sensitivity[sf]
    return sum(1 for v in best.values() if v >= floor) / len(best)


def lowest_feasible_sf(best_rpp: float, sensitivity: Mapping[int, float] = DEFAULT_SF_FLOORS) -> int | None:
    """Fastest spreading factor that still decodes ``best_rpp``; None if none does."""
    for sf in sorted(sensitivity):
        if best_rpp >= sensitivity[sf]:
            return sf
    return None
