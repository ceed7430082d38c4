"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``LORAPL_DISABLE_NUMBA`` is
unset (or ``0``). Both paths are always importable as ``numpy_kernels`` and
``numba_kernels`` so tests and benchmarks can compare them directly.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

EARTH_RADIUS_M = 6_371_000.0


# --------------------------------------------------------------------------
# pure numpy
# --------------------------------------------------------------------------

def _np_haversine(lat1, lon1, lat2, lon2):
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dphi / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2.0) ** 2
    h = np.minimum(h, 1.0)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(h))


def _np_bin_reduce(distance, value, width):
    keys = np.floor(distance / width).astype(np.int64)
    uniq, inverse = np.unique(keys, return_inverse=True)
    counts = np.bincount(inverse).astype(np.int64)
    sum_val = np.bincount(inverse, weights=value)
    sum_logd = np.bincount(inverse, weights=np.log10(distance))
    return uniq, counts, sum_val, sum_logd


def _np_line_fit(x, y, w):
    sw = w.sum()
    mx = (w * x).sum() / sw
    my = (w * y).sum() / sw
    dx = x - mx
    sxx = (w * dx * dx).sum()
    sxy = (w * dx * (y - my)).sum()
    slope = sxy / sxx
    return slope, my - slope * mx


def _np_sum_squares(a):
    return float(np.dot(a, a))


numpy_kernels = SimpleNamespace(
    haversine=_np_haversine,
    bin_reduce=_np_bin_reduce,
    line_fit=_np_line_fit,
    sum_squares=_np_sum_squares,
    name="numpy",
)


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_kernels = None
else:

    @nb.njit(cache=True)
    def haversine(lat1, lon1, lat2, lon2):
        n = lat1.shape[0]
        out = np.empty(n)
        deg = np.pi / 180.0
        for i in range(n):
            p1 = lat1[i] * deg
            p2 = lat2[i] * deg
            s1 = np.sin((p2 - p1) / 2.0)
            s2 = np.sin((lon2[i] - lon1[i]) * deg / 2.0)
            h = s1 * s1 + np.cos(p1) * np.cos(p2) * s2 * s2
            if h > 1.0:
                h = 1.0
            out[i] = 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(h))
        return out

    @nb.njit(cache=True)
    def _bin_reduce_sorted(keys, distance, value):
        order = np.argsort(keys)
        n = keys.shape[0]
        nbins = 0
        for j in range(n):
            if j == 0 or keys[order[j]] != keys[order[j - 1]]:
                nbins += 1
        uniq = np.empty(nbins, dtype=np.int64)
        counts = np.zeros(nbins, dtype=np.int64)
        sum_val = np.zeros(nbins)
        sum_logd = np.zeros(nbins)
        b = -1
        for j in range(n):
            i = order[j]
            if b < 0 or keys[i] != uniq[b]:
                b += 1
                uniq[b] = keys[i]
            counts[b] += 1
            sum_val[b] += value[i]
            sum_logd[b] += np.log10(distance[i])
        return uniq, counts, sum_val, sum_logd

    @nb.njit(cache=True)
    def bin_reduce(distance, value, width):
        n = distance.shape[0]
        keys = np.empty(n, dtype=np.int64)
        lo = np.int64(0)
        hi = np.int64(0)
        for i in range(n):
            k = np.int64(np.floor(distance[i] / width))
            keys[i] = k
            if i == 0 or k < lo:
                lo = k
            if i == 0 or k > hi:
                hi = k
        span = hi - lo + 1
        if span > 4 * n + 1024:
            return _bin_reduce_sorted(keys, distance, value)
        # dense accumulation in input order, then compact
        c = np.zeros(span, dtype=np.int64)
        sv = np.zeros(span)
        sl = np.zeros(span)
        for i in range(n):
            j = keys[i] - lo
            c[j] += 1
            sv[j] += value[i]
            sl[j] += np.log10(distance[i])
        nbins = 0
        for j in range(span):
            if c[j]:
                nbins += 1
        uniq = np.empty(nbins, dtype=np.int64)
        counts = np.empty(nbins, dtype=np.int64)
        sum_val = np.empty(nbins)
        sum_logd = np.empty(nbins)
        b = 0
        for j in range(span):
            if c[j]:
                uniq[b] = j + lo
                counts[b] = c[j]
                sum_val[b] = sv[j]
                sum_logd[b] = sl[j]
                b += 1
        return uniq, counts, sum_val, sum_logd

    @nb.njit(cache=True)
    def line_fit(x, y, w):
        sw = 0.0
        sx = 0.0
        sy = 0.0
        for i in range(x.shape[0]):
            sw += w[i]
            sx += w[i] * x[i]
            sy += w[i] * y[i]
        mx = sx / sw
        my = sy / sw
        sxx = 0.0
        sxy = 0.0
        for i in range(x.shape[0]):
            dx = x[i] - mx
            sxx += w[i] * dx * dx
            sxy += w[i] * dx * (y[i] - my)
        slope = sxy / sxx
        return slope, my - slope * mx

    numba_kernels = SimpleNamespace(
        haversine=haversine,
        bin_reduce=bin_reduce,
        line_fit=line_fit,
        sum_squares=_np_sum_squares,  # BLAS dot already beats a scalar loop
        name="numba",
    )


def _numba_disabled() -> bool:
    return os.environ.get("LORAPL_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


kernels = numpy_kernels if (numba_kernels is None or _numba_disabled()) else numba_kernels
BACKEND = kernels.name


def haversine_m(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorized great-circle distance in meters; inputs broadcast."""
    a, b, c, d = np.broadcast_arrays(
        np.asarray(lat1, dtype=np.float64),
        np.asarray(lon1, dtype=np.float64),
        np.asarray(lat2, dtype=np.float64),
        np.asarray(lon2, dtype=np.float64),
    )
    shape = a.shape
    out = kernels.haversine(
        np.ascontiguousarray(a).ravel(),
        np.ascontiguousarray(b).ravel(),
        np.ascontiguousarray(c).ravel(),
        np.ascontiguousarray(d).ravel(),
    )
    return out.reshape(shape)


def bin_reduce(distance, value, width: float):
    """Group by ``floor(distance / width)``; returns keys, counts, sums, sums of log10 d."""
    return kernels.bin_reduce(
        np.ascontiguousarray(distance, dtype=np.float64),
        np.ascontiguousarray(value, dtype=np.float64),
        float(width),
    )


def line_fit(x, y, w=None) -> tuple[float, float]:
    """Weighted least-squares line; returns (slope, intercept)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ones_like(x) if w is None else np.ascontiguousarray(w, dtype=np.float64)
    slope, intercept = kernels.line_fit(x, y, w)
    return float(slope), float(intercept)


def sum_squares(a) -> float:
    return float(kernels.sum_squares(np.ascontiguousarray(a, dtype=np.float64)))
