"""Group comparisons: Shapiro-Wilk normality, one-way ANOVA and Tukey HSD."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, gammaln, ndtr, ndtri

ALPHA = 0.05


# -- Shapiro-Wilk (Royston's AS R94 approximation) -----------------------------------------


@dataclass(frozen=True)
class SwResult:
    w: float
    p_value: float
    n: int


def _poly(coefs: Sequence[float], x: float) -> float:
    """coefs[0] + coefs[1] x + coefs[2] x^2 + ..."""
    out = 0.0
    for c in reversed(coefs):
        out = out * x + c
    return out


_C1 = (0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056)
_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_C6 = (-0.4803, -0.082676, 0.0030302)
_G = (-2.273, 0.459)


def _sw_coefficients(n: int) -> np.ndarray:
    """Upper-half weights a_1 >= a_2 >= ... for the sorted sample (sum of squares 1/2)."""
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))
    summ2 = 2.0 * float(np.sum(m**2))
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a = np.empty(half)
    a1 = _poly(_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1**2 - 2 * a2**2))
        a[1] = a2
        start = 2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1**2))
        start = 1
    a[0] = a1
    a[start:] = -m[start:] / fac
    return a


def shapiro_wilk(x: Sequence[float]) -> SwResult:
    data = np.sort(np.asarray(x, dtype=float))
    n = len(data)
    if not 3 <= n <= 5000:
        raise ValueError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    rng = data[-1] - data[0]
    if rng <= 0 or not np.isfinite(rng):
        raise ValueError("Shapiro-Wilk is undefined for a constant sample")
    xs = (data - data[0]) / rng
    a = _sw_coefficients(n)
    half = len(a)
    numerator = float(np.dot(a, xs[::-1][:half] - xs[:half])) ** 2
    ssx = float(np.sum((xs - xs.mean()) ** 2))
    w = min(numerator / ssx, 1.0)

    if n == 3:
        p = (6 / math.pi) * (math.asin(math.sqrt(w)) - math.pi / 3)
        return SwResult(w, min(max(p, 0.0), 1.0), n)
    y = math.log1p(-w) if w < 1 else -math.inf
    if n <= 11:
        gamma = _poly(_G, n)
        if y >= gamma:
            return SwResult(w, 1e-99, n)
        y = -math.log(gamma - y)
        mean, sd = _poly(_C3, n), math.exp(_poly(_C4, n))
    else:
        ln_n = math.log(n)
        mean, sd = _poly(_C5, ln_n), math.exp(_poly(_C6, ln_n))
    if y == -math.inf:
        return SwResult(w, 1.0, n)
    p = float(ndtr(-(y - mean) / sd))
    return SwResult(w, p, n)


# -- one-way ANOVA ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class AnovaResult:
    df_between: int
    df_within: int
    ss_between: float
    ss_within: float
    f_value: float
    p_value: float

    @property
    def ss_total(self) -> float:
        return self.ss_between + self.ss_within

    @property
    def ms_between(self) -> float:
        return self.ss_between / self.df_between

    @property
    def ms_within(self) -> float:
        return self.ss_within / self.df_within

    def significant(self, alpha: float = ALPHA) -> bool:
        return self.p_value < alpha


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail of the F distribution via the regularized incomplete beta function."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return float(betainc(df2 / 2, df1 / 2, df2 / (df2 + df1 * f)))


def _check_groups(groups: Sequence[Sequence[float]]) -> list[np.ndarray]:
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2:
        raise ValueError("need at least two groups")
    for i, g in enumerate(arrays):
        if len(g) < 2:
            raise ValueError(f"group {i} has {len(g)} observation(s); at least 2 are required")
    return arrays


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    arrays = _check_groups(groups)
    allx = np.concatenate(arrays)
    grand = allx.mean()
    ss_b = float(sum(len(g) * (g.mean() - grand) ** 2 for g in arrays))
    ss_w = float(sum(((g - g.mean()) ** 2).sum() for g in arrays))
    df_b = len(arrays) - 1
    df_w = len(allx) - len(arrays)
    ms_w = ss_w / df_w
    if ms_w == 0:
        if ss_b == 0:
            raise ValueError("F is undefined: no variance within or between groups")
        return AnovaResult(df_b, df_w, ss_b, ss_w, math.inf, 0.0)
    f = (ss_b / df_b) / ms_w
    return AnovaResult(df_b, df_w, ss_b, ss_w, f, f_sf(f, df_b, df_w))


# -- studentized range distribution --------------------------------------------------------------

_OUTER_NODES = 64
_INNER_NODES = 128


@lru_cache(maxsize=None)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _range_cdf(w: np.ndarray, k: int) -> np.ndarray:
    """P(range of k iid standard normals <= w) for an array of w.

    k * integral phi(z) [Phi(z) - Phi(z - w)]^(k-1) dz over z in [-8, 8].
    """
    x, wt = _gauss_legendre(_INNER_NODES)
    z = 8.0 * x
    phi = np.exp(-0.5 * z**2) / math.sqrt(2 * math.pi)
    w = np.atleast_1d(w)[:, None]
    inner = np.clip(ndtr(z[None, :]) - ndtr(z[None, :] - w), 0.0, 1.0) ** (k - 1)
    return k * 8.0 * (inner * (phi * wt)[None, :]).sum(axis=1)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """P(Q <= q) for the studentized range of k means with df error degrees of freedom.

    Outer Gauss-Legendre integral over s = chi_df / sqrt(df) (64 nodes), inner
    over the normal range distribution (128 nodes).  ``df=inf`` skips the outer
    integral.
    """
    if k < 2 or df < 1:
        raise ValueError("need k >= 2 and df >= 1")
    if q <= 0:
        return 0.0
    if math.isinf(q):
        return 1.0
    if math.isinf(df) or df > 1e5:
        return float(np.clip(_range_cdf(np.array([q]), k)[0], 0.0, 1.0))
    sd = 1.0 / math.sqrt(2.0 * df)
    lo = max(0.0, 1.0 - 10.0 * sd)
    hi = 1.0 + 10.0 * sd
    x, wt = _gauss_legendre(_OUTER_NODES)
    s = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    log_density = (
        0.5 * df * math.log(df) - gammaln(0.5 * df) - (0.5 * df - 1) * math.log(2.0)
        + (df - 1) * np.log(s) - 0.5 * df * s**2
    )
    total = 0.5 * (hi - lo) * float(np.sum(wt * np.exp(log_density) * _range_cdf(q * s, k)))
    return float(min(max(total, 0.0), 1.0))


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)


def studentized_range_ppf(prob: float, k: int, df: float) -> float:
    if not 0 < prob < 1:
        raise ValueError("prob must be in (0, 1)")
    hi = 10.0
    while studentized_range_cdf(hi, k, df) < prob:
        hi *= 2
    return brentq(lambda q: studentized_range_cdf(q, k, df) - prob, 1e-9, hi, xtol=1e-10)


# -- Tukey HSD (Tukey-Kramer for unequal groups) -------------------------------------------------


@dataclass(frozen=True)
class TukeyPair:
    group1: str
    group2: str
    diff: float  # mean(group2) - mean(group1)
    lower: float
    upper: float
    p_adj: float

    def reject(self, alpha: float = ALPHA) -> bool:
        return self.p_adj < alpha

    @property
    def label(self) -> str:
        return f"{self.group2}-{self.group1}"


@dataclass(frozen=True)
class TukeyResult:
    pairs: tuple[TukeyPair, ...]
    alpha: float
    q_critical: float
    df_within: int
    ms_within: float

    def pair(self, a: str, b: str) -> TukeyPair:
        """Comparison b - a, flipping a stored a - b if needed."""
        for p in self.pairs:
            if (p.group1, p.group2) == (a, b):
                return p
            if (p.group1, p.group2) == (b, a):
                return TukeyPair(a, b, -p.diff, -p.upper, -p.lower, p.p_adj)
        raise KeyError((a, b))


def tukey_pair(diff: float, n1: int, n2: int, ms_within: float, df_within: float, k: int,
               alpha: float = ALPHA, q_critical: float | None = None) -> tuple[float, float, float]:
    """(lower, upper, p_adj) for one Tukey-Kramer comparison."""
    se = math.sqrt(ms_within / 2 * (1 / n1 + 1 / n2))
    q_crit = q_critical if q_critical is not None else studentized_range_ppf(1 - alpha, k, df_within)
    if se == 0:
        return diff, diff, 0.0 if diff else 1.0
    p_adj = studentized_range_sf(abs(diff) / se, k, df_within)
    return diff - q_crit * se, diff + q_crit * se, min(max(p_adj, 0.0), 1.0)


def tukey_hsd(groups: Sequence[Sequence[float]] | Mapping[str, Sequence[float]], alpha: float = ALPHA) -> TukeyResult:
    """All pairwise comparisons; group ``j`` minus group ``i`` for ``i < j`` in input order."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if isinstance(groups, Mapping):
        names = [str(n) for n in groups]
        data = list(groups.values())
    else:
        data = list(groups)
        names = [str(i + 1) for i in range(len(data))]
    arrays = _check_groups(data)
    anova = anova_oneway(arrays)
    k = len(arrays)
    q_crit = studentized_range_ppf(1 - alpha, k, anova.df_within)
    pairs = []
    for i, j in combinations(range(k), 2):
        diff = float(arrays[j].mean() - arrays[i].mean())
        lower, upper, p = tukey_pair(diff, len(arrays[i]), len(arrays[j]), anova.ms_within,
                                     anova.df_within, k, alpha, q_crit)
        pairs.append(TukeyPair(names[i], names[j], diff, lower, upper, p))
    return TukeyResult(tuple(pairs), alpha, q_crit, anova.df_within, anova.ms_within)


# -- grouping -----------------------------------------------------------------------------------------


def group_by_rank(scores: Mapping[str, float], top: int = 5, bottom: int = 5,
                  labels: tuple[str, str, str] | None = None) -> dict[str, str]:
    """Top-N / Bottom-N / Others by score (ties broken by case id)."""
    if top + bottom > len(scores):
        raise ValueError("top + bottom exceeds the number of cases")
    top_label, bottom_label, rest = labels or (f"Top{top}", f"Bottom{bottom}", "Others")
    ranked = sorted(scores, key=lambda c: (-scores[c], c))
    out = {c: rest for c in ranked}
    for c in ranked[:top]:
        out[c] = top_label
    for c in ranked[len(ranked) - bottom:]:
        out[c] = bottom_label
    return out


def group_by_quantile(scores: Mapping[str, float], lower: float = 0.25, upper: float = 0.75) -> dict[str, str]:
    """Cases above the upper quantile, below the lower one, and the rest."""
    values = np.asarray(list(scores.values()), dtype=float)
    lo, hi = np.quantile(values, [lower, upper])
    out = {}
    for case, v in scores.items():
        if v > hi:
            out[case] = f">Q{int(upper * 100)}"
        elif v < lo:
            out[case] = f"<Q{int(lower * 100)}"
        else:
            out[case] = "Others"
    return out


def stars(p: float, alpha: float = ALPHA) -> str:
    return "*" if p < alpha else ""
