"""Study analytics: improvement percentages, exact small-sample
nonparametric tests, and time-per-case curves with standard errors.

The exact paths enumerate the full permutation/sign distributions, so
desk-scale cohorts always get exact p-values; larger samples fall back to
the normal approximation with tie and continuity corrections.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Optional, Sequence, Union

MWU_EXACT_MAX_TOTAL = 14  # exact enumeration when m + n <= this
WILCOXON_EXACT_MAX_N = 20  # exact sign distribution when nonzero pairs <= this


class DegenerateSampleError(ValueError):
    """The test is undefined for this input (e.g., all differences zero)."""


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    method: str  # exact | normal_approx
    sidedness: str  # one | two
    n_x: int
    n_y: int

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "sidedness": self.sidedness,
            "n_x": self.n_x,
            "n_y": self.n_y,
        }


@dataclass(frozen=True)
class OutcomeRow:
    participant_id: str
    module: str
    group: str
    pre_score: float
    post_score: float
    total_learning_time_seconds: float

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "module": self.module,
            "group": self.group,
            "pre_score": self.pre_score,
            "post_score": self.post_score,
            "total_learning_time_seconds": self.total_learning_time_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeRow":
        return cls(
            participant_id=d["participant_id"],
            module=d["module"],
            group=d["group"],
            pre_score=float(d["pre_score"]),
            post_score=float(d["post_score"]),
            total_learning_time_seconds=float(d["total_learning_time_seconds"]),
        )


def relative_improvement(pre: float, post: float) -> Optional[float]:
    """Percent change from pre to post; None when pre is zero (undefined)."""
    if pre == 0:
        return None
    return 100.0 * (post - pre) / pre


def improvement_summary(pre: float, post: float) -> dict:
    return {
        "relative_improvement_percent": relative_improvement(pre, post),
        "absolute_delta": post - pre,
    }


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _u_statistic(x: Sequence[float], y: Sequence[float]) -> float:
    u = 0.0
    for xi in x:
        for yj in y:
            if xi > yj:
                u += 1.0
            elif xi == yj:
                u += 0.5
    return u


def mann_whitney_u(
    x: Sequence[float], y: Sequence[float], sidedness: str = "two"
) -> StatResult:
    """Mann-Whitney U test of x versus y.

    U counts pairs with x_i > y_j plus one half per tie. With m + n small
    enough, p comes from enumerating every C(m+n, m) relabeling of the
    pooled values; otherwise from the normal approximation with tie and
    continuity corrections. One-sided tests the alternative that x tends
    larger than y; two-sided doubles the smaller tail, capped at 1.
    """
    if sidedness not in ("one", "two"):
        raise ValueError(f"sidedness must be 'one' or 'two', got {sidedness!r}")
    m, n = len(x), len(y)
    if m == 0 or n == 0:
        raise ValueError("both samples must be non-empty")
    u_obs = _u_statistic(x, y)

    if m + n <= MWU_EXACT_MAX_TOTAL:
        pooled = list(x) + list(y)
        total = 0
        le = 0
        ge = 0
        for idx in combinations(range(m + n), m):
            chosen = set(idx)
            xs = [pooled[i] for i in idx]
            ys = [pooled[i] for i in range(m + n) if i not in chosen]
            u = _u_statistic(xs, ys)
            total += 1
            if u <= u_obs:
                le += 1
            if u >= u_obs:
                ge += 1
        if sidedness == "one":
            p = ge / total
        else:
            p = min(1.0, 2.0 * min(le, ge) / total)
        return StatResult(u_obs, p, "exact", sidedness, m, n)

    pooled = list(x) + list(y)
    big_n = m + n
    ties = Counter(pooled)
    tie_term = sum(t ** 3 - t for t in ties.values()) / (big_n * (big_n - 1))
    var = m * n / 12.0 * ((big_n + 1) - tie_term)
    if var == 0:
        return StatResult(u_obs, 1.0, "normal_approx", sidedness, m, n)
    mean = m * n / 2.0
    sd = math.sqrt(var)
    if sidedness == "one":
        z = (u_obs - mean - 0.5) / sd
        p = _normal_sf(z)
    else:
        z = (abs(u_obs - mean) - 0.5) / sd
        p = min(1.0, 2.0 * _normal_sf(max(z, 0.0)))
    return StatResult(u_obs, max(p, 1e-300), "normal_approx", sidedness, m, n)


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    pre: Sequence[float], post: Sequence[float], sidedness: str = "one"
) -> StatResult:
    """Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; absolute differences get mid-ranks. W is
    the sum of ranks with post > pre. One-sided tests the improvement
    direction (post greater than pre). Small samples enumerate the full
    2^n sign distribution; larger ones use the normal approximation with
    tie and continuity corrections.
    """
    if sidedness not in ("one", "two"):
        raise ValueError(f"sidedness must be 'one' or 'two', got {sidedness!r}")
    if len(pre) != len(post):
        raise ValueError(f"paired samples differ in length: {len(pre)} vs {len(post)}")
    diffs = [b - a for a, b in zip(pre, post) if b != a]
    n = len(diffs)
    if n == 0:
        raise DegenerateSampleError("all paired differences are zero")
    ranks = _midranks([abs(d) for d in diffs])
    w_obs = sum(r for d, r in zip(diffs, ranks) if d > 0)

    if n <= WILCOXON_EXACT_MAX_N:
        # Distribution of W over all sign assignments, via convolution on
        # doubled ranks so mid-ranks stay integral.
        scaled = [int(round(2 * r)) for r in ranks]
        counts: dict[int, int] = {0: 1}
        for s in scaled:
            nxt: dict[int, int] = defaultdict(int)
            for w, c in counts.items():
                nxt[w] += c
                nxt[w + s] += c
            counts = dict(nxt)
        total = 2 ** n
        w2 = int(round(2 * w_obs))
        ge = sum(c for w, c in counts.items() if w >= w2)
        le = sum(c for w, c in counts.items() if w <= w2)
        if sidedness == "one":
            p = ge / total
        else:
            p = min(1.0, 2.0 * min(le, ge) / total)
        return StatResult(w_obs, p, "exact", sidedness, len(pre), len(post))

    mean = n * (n + 1) / 4.0
    tie_counts = Counter(ranks)
    tie_term = sum((t ** 3 - t) for t in tie_counts.values()) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        return StatResult(w_obs, 1.0, "normal_approx", sidedness, len(pre), len(post))
    sd = math.sqrt(var)
    if sidedness == "one":
        z = (w_obs - mean - 0.5) / sd
        p = _normal_sf(z)
    else:
        z = (abs(w_obs - mean) - 0.5) / sd
        p = min(1.0, 2.0 * _normal_sf(max(z, 0.0)))
    return StatResult(w_obs, max(p, 1e-300), "normal_approx", sidedness, len(pre), len(post))


def time_curve(
    session_times: Sequence[Sequence[float]], bin_size: int
) -> list[dict]:
    """Bucket learning-case times by sequence index across sessions.

    Each bin reports the mean, the standard error of the mean (absent when
    the bin holds a single observation), and the observation count.
    """
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    bins: dict[int, list[float]] = defaultdict(list)
    for times in session_times:
        for idx, t in enumerate(times):
            bins[idx // bin_size].append(t)
    curve = []
    for b in sorted(bins):
        values = bins[b]
        n = len(values)
        mean = sum(values) / n
        if n >= 2:
            var = sum((v - mean) ** 2 for v in values) / (n - 1)
            sem = math.sqrt(var) / math.sqrt(n)
        else:
            sem = None
        curve.append({"bin": b, "mean_seconds": mean, "sem": sem, "n": n})
    return curve


OUTCOME_COLUMNS = [
    "participant_id",
    "module",
    "group",
    "pre_score",
    "post_score",
    "total_learning_time_seconds",
]


def export_outcomes(
    outcomes: Sequence[OutcomeRow], path: Union[str, Path], format: str = "csv"
) -> Path:
    path = Path(path)
    rows = [o.to_dict() for o in outcomes]
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=OUTCOME_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
    elif format == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=2)
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


def import_outcomes(path: Union[str, Path]) -> list[OutcomeRow]:
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path, encoding="utf-8") as f:
            return [OutcomeRow.from_dict(d) for d in json.load(f)]
    with open(path, newline="", encoding="utf-8") as f:
        return [OutcomeRow.from_dict(row) for row in csv.DictReader(f)]


def export_stats(stats: dict[str, StatResult], path: Union[str, Path], format: str = "csv") -> Path:
    path = Path(path)
    rows = [{"name": k, **v.to_dict()} for k, v in sorted(stats.items())]
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(
                f, fieldnames=["name", "statistic", "p_value", "method", "sidedness", "n_x", "n_y"]
            )
            writer.writeheader()
            writer.writerows(rows)
    elif format == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=2)
    else:
        raise ValueError(f"unknown format {format!r}")
    return path


def export_curves(curve: Sequence[dict], path: Union[str, Path], format: str = "csv") -> Path:
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["bin", "mean_seconds", "sem", "n"])
            writer.writeheader()
            writer.writerows(curve)
    elif format == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump(list(curve), f, indent=2)
    else:
        raise ValueError(f"unknown format {format!r}")
    return path
