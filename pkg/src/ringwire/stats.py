"""Nonparametric tests: Kruskal-Wallis, Dunn post-hoc, Wilcoxon signed-rank.

Self-contained implementations on mid-rank machinery, with the chi-squared
upper tail computed from the regularized upper incomplete gamma function
(series / continued-fraction hybrid) and the normal tail from erfc. No
statistics library is used anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class NoInformationError(ValueError):
    """Raised when a test has no usable data (e.g. all differences zero)."""


@dataclass
class RankedData:
    values: list
    ranks: list            # mid-ranks, parallel to values
    tie_sizes: list        # size of each tie group (including singletons)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def tie_term(self) -> float:
        """Sum of t^3 - t over tie groups."""
        return float(sum(t ** 3 - t for t in self.tie_sizes))


@dataclass
class TestResult:
    method: str
    statistic: float
    p_value: float
    df: int | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"method": self.method, "statistic": self.statistic, "p_value": self.p_value}
        if self.df is not None:
            d["df"] = self.df
        d.update(self.detail)
        return d


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

_EPS = 1e-15
_MAX_ITER = 1000


def _gamma_p_series(a: float, x: float) -> float:
    """Lower regularized incomplete gamma by series; valid for x < a + 1."""
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _gamma_q_contfrac(a: float, x: float) -> float:
    """Upper regularized incomplete gamma by Lentz continued fraction; x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammainc_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x), absolute accuracy ~1e-14."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_p_series(a, x)
    return _gamma_q_contfrac(a, x)


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-squared distribution."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if x <= 0.0:
        return 1.0
    return min(1.0, max(0.0, gammainc_q(0.5 * df, 0.5 * x)))


def normal_sf(z: float) -> float:
    """Upper tail of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------


def rank_with_ties(values) -> RankedData:
    """Mid-ranks: tied values share the average of the ranks they span."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("cannot rank an empty list")
    order = sorted(range(len(vals)), key=lambda i: vals[i])
    ranks = [0.0] * len(vals)
    tie_sizes = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and vals[order[j + 1]] == vals[order[i]]:
            j += 1
        mid = 0.5 * (i + j) + 1.0  # average of ranks i+1 .. j+1
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        tie_sizes.append(j - i + 1)
        i = j + 1
    return RankedData(values=vals, ranks=ranks, tie_sizes=tie_sizes)


def _pool_and_rank(groups):
    sizes = [len(g) for g in groups]
    if any(s == 0 for s in sizes):
        raise ValueError("all groups must be non-empty")
    pooled = [float(v) for g in groups for v in g]
    ranked = rank_with_ties(pooled)
    rank_sums = []
    idx = 0
    for s in sizes:
        rank_sums.append(sum(ranked.ranks[idx:idx + s]))
        idx += s
    return ranked, sizes, rank_sums


# ---------------------------------------------------------------------------
# tests
# ---------------------------------------------------------------------------


def kruskal_wallis(groups) -> TestResult:
    """Kruskal-Wallis H test with tie correction; p from the chi-squared tail."""
    groups = [list(g) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    ranked, sizes, rank_sums = _pool_and_rank(groups)
    n = ranked.n
    if n < 3:
        raise ValueError("need at least 3 observations in total")
    df = len(groups) - 1
    h = 12.0 / (n * (n + 1)) * sum(r * r / s for r, s in zip(rank_sums, sizes)) - 3.0 * (n + 1)
    denom = 1.0 - ranked.tie_term / (n ** 3 - n)
    if denom <= 0.0:
        # every value identical: no information, by convention H=0, p=1
        return TestResult(method="kruskal-wallis", statistic=0.0, p_value=1.0, df=df)
    h_corrected = h / denom
    if h_corrected < 0.0 and h_corrected > -1e-12:
        h_corrected = 0.0
    return TestResult(
        method="kruskal-wallis",
        statistic=h_corrected,
        p_value=chi2_sf(h_corrected, df),
        df=df,
    )


def dunn_test(groups, adjustment: str = "bonferroni") -> list:
    """Dunn's post-hoc pairwise comparisons on the pooled mid-ranks.

    adjustment: "bonferroni" (default) multiplies each two-sided p by the
    number of pairs (capped at 1); "none" reports raw p-values.
    """
    if adjustment not in ("bonferroni", "none"):
        raise ValueError(f"unknown adjustment {adjustment!r}")
    groups = [list(g) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two groups")
    ranked, sizes, rank_sums = _pool_and_rank(groups)
    n = ranked.n
    mean_ranks = [r / s for r, s in zip(rank_sums, sizes)]
    tie_term = ranked.tie_term / (12.0 * (n - 1))
    base_var = n * (n + 1) / 12.0 - tie_term
    k = len(groups)
    n_pairs = k * (k - 1) // 2
    results = []
    for i in range(k):
        for j in range(i + 1, k):
            var = base_var * (1.0 / sizes[i] + 1.0 / sizes[j])
            if var <= 0.0:
                z = 0.0
            else:
                z = (mean_ranks[i] - mean_ranks[j]) / math.sqrt(var)
            p_raw = 2.0 * normal_sf(abs(z))
            p = min(1.0, p_raw * n_pairs) if adjustment == "bonferroni" else min(1.0, p_raw)
            results.append(
                TestResult(
                    method="dunn",
                    statistic=z,
                    p_value=p,
                    detail={"pair": (i, j), "p_unadjusted": min(1.0, p_raw), "adjustment": adjustment},
                )
            )
    return results


def _wilcoxon_exact_cdf_leq(ranks2: list, w2: int) -> float:
    """P(2*W+ <= w2) under random signs, by counting over the 2^n assignments.

    ranks2 holds doubled ranks (integers even with mid-ranks). Polynomial
    counting: counts[v] = number of sign assignments with 2*W+ == v.
    """
    total = sum(ranks2)
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in ranks2:
        for v in range(total - r, -1, -1):
            if counts[v]:
                counts[v + r] += counts[v]
    cum = 0
    for v in range(min(w2, total) + 1):
        cum += counts[v]
    return cum / (2 ** len(ranks2))


def wilcoxon_signed_rank(differences, exact_threshold: int = 20) -> TestResult:
    """Wilcoxon signed-rank test on paired differences.

    Zeros are discarded (Wilcoxon's original procedure). For n <=
    exact_threshold the two-sided p is exact over all sign assignments;
    beyond that a normal approximation with tie-corrected variance and
    continuity correction is used.
    """
    diffs = [float(d) for d in differences if float(d) != 0.0]
    n = len(diffs)
    if n == 0:
        raise NoInformationError("all differences are zero")
    ranked = rank_with_ties([abs(d) for d in diffs])
    w_plus = sum(r for r, d in zip(ranked.ranks, diffs) if d > 0)
    w_minus = sum(r for r, d in zip(ranked.ranks, diffs) if d < 0)
    w = min(w_plus, w_minus)
    if n <= exact_threshold:
        ranks2 = [int(round(2.0 * r)) for r in ranked.ranks]
        p = min(1.0, 2.0 * _wilcoxon_exact_cdf_leq(ranks2, int(round(2.0 * w))))
        return TestResult(
            method="wilcoxon-signed-rank-exact",
            statistic=w,
            p_value=p,
            detail={"n": n, "w_plus": w_plus, "w_minus": w_minus},
        )
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - ranked.tie_term / 48.0
    if var <= 0.0:
        raise NoInformationError("zero variance (all magnitudes tied to degeneracy)")
    z = (w - mean + 0.5) / math.sqrt(var)  # w <= mean, continuity toward the mean
    p = min(1.0, 2.0 * normal_sf(abs(z)))
    return TestResult(
        method="wilcoxon-signed-rank-normal",
        statistic=w,
        p_value=p,
        detail={"n": n, "w_plus": w_plus, "w_minus": w_minus, "z": z},
    )
