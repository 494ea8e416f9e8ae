"""Statistical kernel: Pearson r with significance, Mood's median test,
and rank-based confidence intervals for the median.

Everything is self-contained: the Student-t tail probability comes from a
continued-fraction regularized incomplete beta, the chi-square(1 df)
survival function from the complementary error function, and normal
quantiles from a rational approximation polished with Halley steps. The
lower-median convention is used throughout (for even counts the smaller
of the two central order statistics).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class LengthMismatchError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    pass


class EmptySampleError(ValueError):
    pass


def lower_median(values) -> float:
    """Median with the lower-median convention for even counts."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptySampleError("median of an empty sample")
    k = (arr.size - 1) // 2
    return float(np.partition(arr, k)[k])


def stars(p: float) -> str:
    """Significance label at the 0.05 / 0.01 / 0.001 thresholds."""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_a: int
    n_b: int
    stars: str
    degenerate: bool = False


@dataclass(frozen=True)
class MedianCI:
    median: float
    lo: float
    hi: float
    small_sample: bool = False


# ---------------------------------------------------------------------------
# special functions


def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta (modified Lentz).
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to ~1e-14 via the continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


_PPF_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_PPF_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_PPF_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_PPF_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)


def norm_ppf(p: float) -> float:
    """Standard normal quantile, refined to machine precision with erfc."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    elif p <= 1.0 - plow:
        q = p - 0.5
        r = q * q
        x = (
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5])
            * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
        )
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0
        )
    for _ in range(2):
        err = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
        u = err * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
        x -= u / (1.0 + 0.5 * x * u)
    return x


def chi2_sf_1df(stat: float) -> float:
    """Survival function of chi-square with one degree of freedom."""
    if stat <= 0.0:
        return 1.0
    return math.erfc(math.sqrt(0.5 * stat))


def student_t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t."""
    t2 = t * t
    return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t2))


# ---------------------------------------------------------------------------
# tests


def pearson(x, y) -> TestResult:
    """Pearson correlation with a two-sided t-test p-value."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or ya.ndim != 1 or xa.shape != ya.shape:
        raise LengthMismatchError("x and y must be 1-d and of equal length")
    n = int(xa.size)
    if n < 3:
        raise LengthMismatchError("need at least 3 paired observations")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVarianceError("zero variance in one of the samples")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    rc = max(-1.0, min(1.0, r))
    df = n - 2
    if 1.0 - rc * rc <= 0.0:
        p = 0.0
    else:
        t = rc * math.sqrt(df / (1.0 - rc * rc))
        p = student_t_sf_two_sided(t, df)
    return TestResult(statistic=r, p_value=p, n_a=n, n_b=n, stars=stars(p))


def moods_median_test(a, b, *, yates: bool = False) -> TestResult:
    """Mood's median test: chi-square on the 2x2 table against the grand median.

    Values tied with the grand (lower-)median count as "at or below". A
    degenerate table (a zero row or column) reports statistic 0, p = 1.0
    and the degenerate flag instead of raising.
    """
    aa = np.asarray(a, dtype=np.float64)
    bb = np.asarray(b, dtype=np.float64)
    n_a = int(aa.size)
    n_b = int(bb.size)
    if n_a < 1 or n_b < 1:
        raise EmptySampleError("both samples must be non-empty")
    m = lower_median(np.concatenate([aa, bb]))
    a_above = int(np.count_nonzero(aa > m))
    b_above = int(np.count_nonzero(bb > m))
    a_below = n_a - a_above
    b_below = n_b - b_above
    above = a_above + b_above
    below = a_below + b_below
    if above == 0 or below == 0:
        return TestResult(0.0, 1.0, n_a, n_b, stars(1.0), degenerate=True)
    n = n_a + n_b
    det = float(a_above * b_below - b_above * a_below)
    if yates:
        det = max(0.0, abs(det) - 0.5 * n)
    stat = n * det * det / (float(above) * below * n_a * n_b)
    p = min(1.0, chi2_sf_1df(stat))
    return TestResult(stat, p, n_a, n_b, stars(p))


def median_ci(x, level: float = 0.95) -> MedianCI:
    """Rank-based (binomial) confidence interval around the median.

    Ranks are round(n/2 - z*sqrt(n)/2) and round(1 + n/2 + z*sqrt(n)/2)
    with half-up rounding, clamped to [1, n]; the endpoints are order
    statistics of the sample. Below n = 6 the interval degenerates to
    (min, max) and is flagged as small-sample.
    """
    xs = np.sort(np.asarray(x, dtype=np.float64))
    n = int(xs.size)
    if n == 0:
        raise EmptySampleError("empty sample")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    med = float(xs[(n - 1) // 2])
    if n < 6:
        return MedianCI(med, float(xs[0]), float(xs[-1]), small_sample=True)
    z = norm_ppf(0.5 + 0.5 * level)
    half = 0.5 * z * math.sqrt(n)
    lo_rank = int(math.floor(0.5 * n - half + 0.5))
    hi_rank = int(math.floor(1.0 + 0.5 * n + half + 0.5))
    lo_rank = min(max(lo_rank, 1), n)
    hi_rank = min(max(hi_rank, 1), n)
    return MedianCI(med, float(xs[lo_rank - 1]), float(xs[hi_rank - 1]))
