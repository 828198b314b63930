"""Shared test utilities: an accurate stable CDF oracle and KS machinery.

The CDF oracle is deliberately independent of the package's density code in
the tail: beyond a switch radius it uses the classical convergent series for
the symmetric stable survival function (alpha <= 1), so sampler tests are
anchored to two separately-derived computations that must agree where they
overlap.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import PchipInterpolator

from harnacklab import StableSpec, compute_sigma, stable_cdf_1d


def tail_complement_series(alpha: float, tb: float, x: float, kmax: int = 400) -> float:
    """1 - F(x) for cf exp(-tb s^alpha), via the jump-tail series.

    The expansion sum_k (-1)^(k+1) (tb)^k Gamma(k alpha) sin(k pi alpha/2)
    x^(-k alpha) / (pi k!) converges for all x > 0 when alpha < 1 and for
    x > tb when alpha = 1 (it is the arctan series there).  Only useful in
    the far tail where it converges fast; callers pick the switch point.
    """
    if alpha > 1.0:
        raise ValueError("series oracle applies to alpha <= 1")
    total = 0.0
    log_tb, log_x = math.log(tb), math.log(x)
    for k in range(1, kmax + 1):
        s = math.sin(k * math.pi * alpha / 2.0)
        if s == 0.0:
            continue
        log_mag = k * log_tb + math.lgamma(k * alpha) - math.lgamma(k + 1) - k * alpha * log_x
        term = (-1.0) ** (k + 1) * s * math.exp(log_mag)
        total += term
        if abs(term) < 1e-17 * max(abs(total), 1e-300) and k > 4:
            break
    return total / math.pi


def cdf_interpolant(spec: StableSpec, t: float, q_tail: float = 1e-6):
    """Monotone-cubic CDF of the symmetric stable marginal, fast to evaluate.

    Core radii are handled by the package quadrature CDF; for alpha <= 1 the
    far tail switches to the independent series oracle so heavy-tailed
    quantiles out to 1 - q_tail are still covered.  Interpolation error is
    far below KS resolution at n = 1e5.
    """
    alpha = spec.alpha
    scale = (t * compute_sigma(spec.d, alpha) * spec.c) ** (1.0 / alpha)
    # scaled radius of the q_tail quantile, from the first-order tail mass
    c_tail = math.gamma(alpha) * math.sin(math.pi * alpha / 2.0) / math.pi
    y_q = 2.0 * (c_tail / q_tail) ** (1.0 / alpha)
    tb = t * compute_sigma(spec.d, alpha) * spec.c

    if alpha <= 1.0:
        y_switch = 50.0
        core = np.geomspace(1e-3, y_switch, 700)
        tail = np.geomspace(y_switch * 1.05, max(y_q, y_switch * 2), 220)
        xs_core = scale * core
        xs_tail = scale * tail
        cdf_core = np.array([stable_cdf_1d(spec, t, float(x)) for x in xs_core])
        cdf_tail = np.array(
            [1.0 - tail_complement_series(alpha, tb, float(x)) for x in xs_tail]
        )
        # the two oracles must agree where they meet
        seam = 1.0 - tail_complement_series(alpha, tb, float(xs_core[-1]))
        assert abs(seam - cdf_core[-1]) < 1e-8, (seam, cdf_core[-1])
        xs = np.concatenate([xs_core, xs_tail])
        cdf = np.concatenate([cdf_core, cdf_tail])
    else:
        xs = scale * np.geomspace(1e-3, max(y_q, 10.0), 900)
        cdf = np.array([stable_cdf_1d(spec, t, float(x)) for x in xs])

    xs = np.concatenate([-xs[::-1], [0.0], xs])
    cdf = np.concatenate([1.0 - cdf[::-1], [0.5], cdf])
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    pchip = PchipInterpolator(xs, cdf, extrapolate=False)
    lo, hi = xs[0], xs[-1]

    def F(points):
        pts = np.asarray(points, dtype=float)
        out = np.empty(pts.shape)
        inside = (pts >= lo) & (pts <= hi)
        out[inside] = np.clip(pchip(pts[inside]), 0.0, 1.0)
        out[pts < lo] = 0.0
        out[pts > hi] = 1.0
        return out

    return F


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """Exact one-sample Kolmogorov-Smirnov statistic."""
    xs = np.sort(np.asarray(samples, dtype=float).ravel())
    n = xs.size
    F = cdf(xs)
    grid_hi = np.arange(1, n + 1) / n
    grid_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(grid_hi - F), np.abs(F - grid_lo))))


def ks_threshold(n: int, level: float = 0.01) -> float:
    """Asymptotic KS critical value: c(level) / sqrt(n), c(0.01) = 1.628."""
    coeff = {0.1: 1.224, 0.05: 1.358, 0.01: 1.628}[level]
    return coeff / math.sqrt(n)
