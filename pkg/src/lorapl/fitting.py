"""Log-distance curve fitting over distance-binned means, plus shadow-fading stats."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DegenerateInput, EmptyInput, ValidationError
from .models import LdplParams


@dataclass(frozen=True)
class DistanceBin:
    center_m: float
    mean_pl_db: float
    count: int
    mean_log10_d: float


class Binning:
    """Samples grouped into fixed-width distance bins.

    Keeps the per-sample arrays so residuals can be computed per sample
    after the line is fitted to the bin means.
    """

    def __init__(self, distance_m, path_loss_db, width_m: float = 10.0):
        d = np.asarray(distance_m, dtype=np.float64)
        pl = np.asarray(path_loss_db, dtype=np.float64)
        if d.size == 0:
            raise EmptyInput("no samples to bin")
        if d.shape != pl.shape:
            raise ValidationError("distance and path-loss arrays differ in length")
        if np.any(~(d > 0)):
            raise ValidationError("all distances must be > 0")
        if not width_m > 0:
            raise ValidationError("bin width must be > 0")
        self.width = float(width_m)
        self.distance_m = d
        self.path_loss_db = pl
        keys, counts, sum_pl, sum_logd = _accel.bin_reduce(d, pl, self.width)
        self.keys = keys
        self.counts = counts
        self.mean_pl = sum_pl / counts
        self.mean_logd = sum_logd / counts

    @property
    def centers(self) -> np.ndarray:
        return self.keys * self.width + self.width / 2.0

    @property
    def bins(self) -> list[DistanceBin]:
        return [
            DistanceBin(float(c), float(m), int(n), float(lg))
            for c, m, n, lg in zip(self.centers, self.mean_pl, self.counts, self.mean_logd)
        ]

    def __len__(self):
        return len(self.keys)

    def __iter__(self):
        return iter(self.bins)


def bin_by_distance(distance_m, path_loss_db, bin_width_m: float = 10.0) -> Binning:
    return Binning(distance_m, path_loss_db, bin_width_m)


@dataclass
class FitResult:
    params: LdplParams
    residuals: np.ndarray
    r_squared: float
    sample_count: int
    bin_count: int

    def to_dict(self) -> dict:
        p = self.params
        return {
            "n": p.n,
            "pl_d0": p.pl_d0,
            "d0": p.d0,
            "sigma": p.sigma,
            "r_squared": self.r_squared,
            "sample_count": self.sample_count,
            "bin_count": self.bin_count,
        }


def fit_line_to_bins(binning: Binning, d0: float = 1000.0, weighted: bool = False,
                     abscissa: str = "mean_log") -> tuple[float, float]:
    """OLS of bin-mean path loss against 10*log10(d/d0); returns (n, pl_d0).

    ``abscissa="mean_log"`` places each bin at the mean of its samples'
    log-distances, which makes the fit exact on noiseless data;
    ``"center"`` uses the bin center instead.
    """
    if len(binning) < 2:
        raise DegenerateInput(f"need at least 2 distance bins, got {len(binning)}")
    if abscissa == "mean_log":
        logd = binning.mean_logd
    elif abscissa == "center":
        logd = np.log10(binning.centers)
    else:
        raise ValidationError(f"unknown abscissa {abscissa!r}")
    x = 10.0 * (logd - math.log10(d0))
    if np.ptp(x) == 0.0:
        raise DegenerateInput("all bins share one distance")
    w = binning.counts.astype(np.float64) if weighted else None
    return _accel.line_fit(x, binning.mean_pl, w)


def fit_ldpl(binning: Binning, d0: float = 1000.0, weighted: bool = False,
             abscissa: str = "mean_log") -> FitResult:
    """Fit the one-slope model to bin means; sigma comes from per-sample residuals."""
    if not d0 > 0:
        raise ValidationError("d0 must be > 0")
    n, pl_d0 = fit_line_to_bins(binning, d0, weighted, abscissa)
    d = binning.distance_m
    pl = binning.path_loss_db
    resid = pl - (pl_d0 + 10.0 * n * np.log10(d / d0))
    sigma = float(np.std(resid))
    centered = pl - pl.mean()
    ss_tot = _accel.sum_squares(centered)
    ss_res = _accel.sum_squares(resid)
    r2 = 1.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return FitResult(LdplParams(n, pl_d0, d0, sigma), resid, r2, len(d), len(binning))


def fit_samples(distance_m, path_loss_db, d0: float = 1000.0, bin_width_m: float = 10.0,
                weighted: bool = False) -> FitResult:
    return fit_ldpl(Binning(distance_m, path_loss_db, bin_width_m), d0, weighted)


def residual_ecdf(residuals) -> list[tuple[float, float]]:
    """Right-continuous ECDF as (value, P[X <= value]) at each distinct value."""
    r = np.asarray(residuals, dtype=np.float64)
    if r.size == 0:
        raise EmptyInput("no residuals")
    values, counts = np.unique(r, return_counts=True)
    prob = np.cumsum(counts) / r.size
    prob[-1] = 1.0
    return list(zip(values.tolist(), prob.tolist()))


def normal_fit(residuals) -> tuple[float, float]:
    """Sample mean and population standard deviation."""
    r = np.asarray(residuals, dtype=np.float64)
    if r.size < 2:
        raise EmptyInput("need at least two residuals")
    return float(r.mean()), float(r.std())
