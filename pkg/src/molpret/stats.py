"""Metrics, replicate orchestration and the statistical comparison protocol.

Models are compared per benchmark with a Tukey HSD test at 95% confidence:
the best-performing model and every model statistically indistinguishable
from it count as winners, and win rates aggregate winner membership across
benchmarks.  Activity-cliff benchmarks additionally run a one-sided,
one-sample t-test on per-seed (cliff RMSE - noncliff RMSE) differences to
decide whether performance is consistent between the two subgroups.

The studentized-range quantile is computed from first principles: the CDF
is a nested Gauss-Legendre quadrature (outer over the scaled-chi density of
the pooled standard deviation, inner over the Gaussian range kernel),
inverted by bisection.  Metric orientation is carried explicitly; winner
sets are invariant to positive affine rescaling, so no metric rescaling is
needed.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc, ndtr

from .errors import NumericError

ORIENTATIONS = ("higher_better", "lower_better")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rmse(pred, target) -> float:
    pred, target = _aligned(pred, target)
    return math.sqrt(float(np.mean((pred - target) ** 2)))


def mae(pred, target) -> float:
    pred, target = _aligned(pred, target)
    return float(np.mean(np.abs(pred - target)))


def r2(pred, target) -> float:
    pred, target = _aligned(pred, target)
    ss_res = float(np.sum((target - pred) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - ss_res / ss_tot


def _aligned(pred, target):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ValueError("prediction/label length mismatch")
    return pred, target


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned their average rank."""
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Rank-statistic AUC with tie correction via average ranks."""
    scores, labels = _aligned(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc is undefined with a single class present")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step integration of the precision-recall curve, descending over
    distinct score thresholds."""
    scores, labels = _aligned(scores, labels)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise ValueError("average_precision is undefined without positives")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    ap = 0.0
    tp = 0
    fp = 0
    prev_recall = 0.0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i:j + 1].sum())
        fp += (j - i + 1) - int(sorted_labels[i:j + 1].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)


METRICS = {
    "rmse": rmse,
    "mae": mae,
    "r2": r2,
    "roc_auc": roc_auc,
    "average_precision": average_precision,
}


# ---------------------------------------------------------------------------
# studentized range distribution
# ---------------------------------------------------------------------------

def _gauss_legendre(lo: float, hi: float, n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (nodes + 1.0), half * weights


def _range_cdf_at(u, z, wz, phi_z, cdf_z, k: int) -> np.ndarray:
    """P(range of k standard normals < u) for an array of u values."""
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    inner = np.clip(cdf_z[None, :] - ndtr(z[None, :] - u[:, None]), 0.0, 1.0)
    return k * ((wz * phi_z)[None, :] * inner ** (k - 1)).sum(axis=1)


def studentized_range_cdf(q: float, k: int, df: float,
                          n_nodes: int = 128) -> float:
    """CDF of the studentized range with ``k`` groups and ``df`` degrees of
    freedom, by nested Gauss-Legendre quadrature."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if q <= 0.0:
        return 0.0
    z, wz = _gauss_legendre(-9.0, 9.0, n_nodes)
    phi_z = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    cdf_z = ndtr(z)
    if not math.isfinite(df) or df > 1e8:
        return float(_range_cdf_at(q, z, wz, phi_z, cdf_z, k)[0])

    # outer integral over s = chi_df / sqrt(df); the density concentrates at
    # 1 with spread ~ 1/sqrt(2 df), so the node range adapts to df
    spread = 1.0 / math.sqrt(2.0 * df)
    lo = max(1e-10, 1.0 - 12.0 * spread)
    hi = 1.0 + 12.0 * spread
    s, ws = _gauss_legendre(lo, hi, n_nodes)
    log_f = ((df / 2.0) * math.log(df) + (df - 1.0) * np.log(s)
             - df * s * s / 2.0 - (df / 2.0 - 1.0) * math.log(2.0)
             - math.lgamma(df / 2.0))
    f_s = np.exp(log_f)
    p_range = _range_cdf_at(q * s, z, wz, phi_z, cdf_z, k)
    return float((ws * f_s * p_range).sum())


@lru_cache(maxsize=256)
def studentized_range_quantile(alpha: float, k: int, df: float,
                               n_nodes: int = 128) -> float:
    """Critical value q with P(Q > q) = alpha, found by bisection on the
    quadrature CDF to |F - (1 - alpha)| < 1e-6."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    target = 1.0 - alpha
    lo, hi = 0.0, 100.0
    if studentized_range_cdf(hi, k, df, n_nodes) < target:
        raise NumericError("studentized-range bisection bounds exceeded")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = studentized_range_cdf(mid, k, df, n_nodes)
        if abs(val - target) < 1e-6:
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    raise NumericError("studentized-range bisection did not converge")


# ---------------------------------------------------------------------------
# Student t CDF (for the consistency test)
# ---------------------------------------------------------------------------

def t_cdf(t: float, df: int) -> float:
    """Student-t CDF through the regularized incomplete beta function."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * betainc(df / 2.0, 0.5, x)
    return 1.0 - tail if t > 0 else tail


# ---------------------------------------------------------------------------
# Tukey HSD and aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TukeyResult:
    models: tuple[str, ...]
    means: np.ndarray
    ms_within: float
    df: int
    q_crit: float
    different: np.ndarray        # (k, k) bool, symmetric
    winners: tuple[str, ...]


def tukey_hsd(samples: dict[str, np.ndarray], alpha: float = 0.05,
              orientation: str = "lower_better") -> TukeyResult:
    """All-pairs comparison; winners are the best-mean model plus every
    model not significantly different from it at the given level.

    With zero pooled within-variance the models are exactly separated:
    any mean difference counts as significant.
    """
    if orientation not in ORIENTATIONS:
        raise ValueError(f"unknown orientation {orientation!r}")
    models = tuple(samples)
    k = len(models)
    if k < 2:
        raise ValueError("tukey_hsd needs at least 2 models")
    values = [np.asarray(samples[m], dtype=np.float64) for m in models]
    n = len(values[0])
    if n < 2:
        raise ValueError("tukey_hsd needs at least 2 replicates per model")
    if any(len(v) != n for v in values):
        raise ValueError("unequal replicate counts are not supported")

    means = np.array([v.mean() for v in values])
    df = k * (n - 1)
    ms_within = float(sum(((v - v.mean()) ** 2).sum() for v in values)) / df
    q_crit = studentized_range_quantile(alpha, k, float(df))

    different = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            if ms_within == 0.0:
                sig = means[i] != means[j]
            else:
                stat = abs(means[i] - means[j]) / math.sqrt(ms_within / n)
                sig = stat > q_crit
            different[i, j] = different[j, i] = sig

    best = int(np.argmin(means) if orientation == "lower_better"
               else np.argmax(means))
    winners = tuple(models[j] for j in range(k)
                    if j == best or not different[best, j])
    return TukeyResult(models, means, ms_within, df, q_crit, different, winners)


def aggregate_wins(winner_sets, models) -> dict[str, tuple[int, int]]:
    """Win count and whole-percent win rate per model across benchmarks."""
    winner_sets = list(winner_sets)
    total = len(winner_sets)
    out = {}
    for m in models:
        count = sum(1 for ws in winner_sets if m in ws)
        rate = int(round(100.0 * count / total)) if total else 0
        out[m] = (count, rate)
    return out


@dataclass(frozen=True)
class ConsistencyResult:
    consistent: bool
    t: float
    p: float
    mean_diff: float


def cliff_consistency(diffs, alpha: float = 0.05) -> ConsistencyResult:
    """One-sided, one-sample t-test of per-seed (cliff - noncliff) RMSE
    differences against H1: the mean difference is positive.

    Consistent means failing to reject (p >= alpha).  Degenerate zero-
    variance samples resolve by the sign of the mean.
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    n = len(diffs)
    if n < 2:
        raise ValueError("cliff_consistency needs at least 2 differences")
    mean = float(diffs.mean())
    s = float(diffs.std(ddof=1))
    if s == 0.0:
        if mean > 0.0:
            return ConsistencyResult(False, float("inf"), 0.0, mean)
        t = 0.0 if mean == 0.0 else float("-inf")
        return ConsistencyResult(True, t, 1.0, mean)
    t = mean / (s / math.sqrt(n))
    p = float(1.0 - t_cdf(t, n - 1))
    return ConsistencyResult(bool(p >= alpha), t, p, mean)


# ---------------------------------------------------------------------------
# replicate orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Benchmark:
    """A dataset with a fixed train/test split and an evaluation metric.

    ``cliff_labels`` marks test rows belonging to activity-cliff series;
    when present each replicate also records subgroup RMSEs.
    """

    name: str
    train_smiles: tuple[str, ...]
    train_labels: np.ndarray
    test_smiles: tuple[str, ...]
    test_labels: np.ndarray
    task: str
    metric: str
    orientation: str
    cliff_labels: np.ndarray | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"unknown orientation {self.orientation!r}")
        if self.cliff_labels is not None \
                and len(self.cliff_labels) != len(self.test_smiles):
            raise ValueError("cliff labels must align with test rows")


@dataclass(frozen=True)
class ModelSpec:
    """Name plus a fit function ``fit(train_smiles, train_labels, seed)``
    returning a predictor ``predict(smiles) -> np.ndarray``."""

    name: str
    fit: object


@dataclass(frozen=True)
class ReplicateResult:
    benchmark: str
    model: str
    seed: int
    metric: str
    value: float
    orientation: str
    rmse_cliff: float | None = None
    rmse_noncliff: float | None = None


def _run_one(benchmark: Benchmark, spec: ModelSpec, seed: int) -> ReplicateResult:
    try:
        predictor = spec.fit(benchmark.train_smiles, benchmark.train_labels, seed)
        pred = np.asarray(predictor(benchmark.test_smiles), dtype=np.float64)
        value = METRICS[benchmark.metric](pred, benchmark.test_labels)
        rmse_cliff = rmse_noncliff = None
        if benchmark.cliff_labels is not None:
            cl = np.asarray(benchmark.cliff_labels, dtype=bool)
            rmse_cliff = rmse(pred[cl], benchmark.test_labels[cl])
            rmse_noncliff = rmse(pred[~cl], benchmark.test_labels[~cl])
        if not math.isfinite(value):
            raise NumericError(f"non-finite metric value {value}")
    except Exception as e:
        raise RuntimeError(
            f"benchmark {benchmark.name!r} model {spec.name!r} "
            f"seed {seed}: {e}") from e
    return ReplicateResult(benchmark.name, spec.name, seed, benchmark.metric,
                           value, benchmark.orientation,
                           rmse_cliff, rmse_noncliff)


def run_replicates(benchmark: Benchmark, spec: ModelSpec, n_reps: int = 5,
                   workers: int = 1) -> list[ReplicateResult]:
    """Train and evaluate under seeds 1..n_reps on the fixed test split.

    With multiple workers, replicates run concurrently but results keep
    seed order.
    """
    seeds = range(1, n_reps + 1)
    if workers <= 1:
        return [_run_one(benchmark, spec, s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_one, benchmark, spec, s) for s in seeds]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# results persistence and reporting
# ---------------------------------------------------------------------------

RESULTS_HEADER = ("benchmark", "model", "seed", "metric", "value",
                  "orientation", "rmse_cliff", "rmse_noncliff")


def write_results_csv(results, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in results:
            writer.writerow([
                r.benchmark, r.model, r.seed, r.metric, repr(r.value),
                r.orientation,
                "" if r.rmse_cliff is None else repr(r.rmse_cliff),
                "" if r.rmse_noncliff is None else repr(r.rmse_noncliff),
            ])


def read_results_csv(path) -> list[ReplicateResult]:
    results = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULTS_HEADER[:6]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for i, row in enumerate(reader, start=2):
            try:
                results.append(ReplicateResult(
                    row["benchmark"], row["model"], int(row["seed"]),
                    row["metric"], float(row["value"]), row["orientation"],
                    float(row["rmse_cliff"]) if row.get("rmse_cliff") else None,
                    float(row["rmse_noncliff"]) if row.get("rmse_noncliff") else None,
                ))
            except (KeyError, ValueError) as e:
                raise ValueError(f"{path}:{i}: bad results row: {e}") from e
    return results


@dataclass(frozen=True)
class BenchReport:
    """Aggregated comparison: per-benchmark winner sets, win counts/rates,
    and per-(benchmark, model) cliff-consistency outcomes."""

    benchmarks: tuple[str, ...]
    models: tuple[str, ...]
    winners: dict[str, tuple[str, ...]]
    wins: dict[str, tuple[int, int]]  # model -> (count, rate %)
    consistency: dict[tuple[str, str], ConsistencyResult]
    consistency_rates: dict[str, int]  # model -> whole percent


def build_report(results, alpha: float = 0.05) -> BenchReport:
    by_bench: dict[str, dict[str, list[ReplicateResult]]] = {}
    models_seen: list[str] = []
    for r in results:
        by_bench.setdefault(r.benchmark, {}).setdefault(r.model, []).append(r)
        if r.model not in models_seen:
            models_seen.append(r.model)

    winners: dict[str, tuple[str, ...]] = {}
    consistency: dict[tuple[str, str], ConsistencyResult] = {}
    cliff_benchmarks: set[str] = set()
    for bench, per_model in sorted(by_bench.items()):
        orientations = {r.orientation for rs in per_model.values() for r in rs}
        if len(orientations) != 1:
            raise ValueError(f"benchmark {bench!r} mixes orientations")
        samples = {m: np.array([x.value for x in sorted(rs, key=lambda r: r.seed)])
                   for m, rs in per_model.items()}
        result = tukey_hsd(samples, alpha, orientations.pop())
        winners[bench] = result.winners
        for m, rs in per_model.items():
            rs = sorted(rs, key=lambda r: r.seed)
            if all(r.rmse_cliff is not None and r.rmse_noncliff is not None
                   for r in rs):
                diffs = [r.rmse_cliff - r.rmse_noncliff for r in rs]
                consistency[(bench, m)] = cliff_consistency(diffs, alpha)
                cliff_benchmarks.add(bench)

    wins = aggregate_wins(winners.values(), models_seen)
    rates = {}
    for m in models_seen:
        entries = [consistency[(b, m)] for b in cliff_benchmarks
                   if (b, m) in consistency]
        if entries:
            rates[m] = int(round(100.0 * sum(e.consistent for e in entries)
                                 / len(entries)))
    return BenchReport(tuple(sorted(by_bench)), tuple(models_seen),
                       winners, wins, consistency, rates)


def report_tables(report: BenchReport) -> str:
    """Human-readable summary of winner sets and win rates."""
    lines = ["model performance summary", ""]
    width = max((len(m) for m in report.models), default=5)
    lines.append(f"{'model':<{width}}  wins  rate%" +
                 ("  consistency%" if report.consistency_rates else ""))
    ranked = sorted(report.models,
                    key=lambda m: (-report.wins[m][0], m))
    for m in ranked:
        count, rate = report.wins[m]
        row = f"{m:<{width}}  {count:>4}  {rate:>4}"
        if report.consistency_rates:
            row += f"  {report.consistency_rates.get(m, ''):>12}"
        lines.append(row)
    lines.append("")
    lines.append("per-benchmark winners")
    for bench in report.benchmarks:
        lines.append(f"  {bench}: " + ", ".join(report.winners[bench]))
    return "\n".join(lines) + "\n"


def write_report(report: BenchReport, out_dir) -> None:
    """Emit the winner/win-rate CSVs, consistency CSV and a text table."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "wins.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "win_count", "win_rate_percent"])
        for m in report.models:
            count, rate = report.wins[m]
            writer.writerow([m, count, rate])
    with open(os.path.join(out_dir, "winners.csv"), "w", encoding="utf-8",
              newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["benchmark", "winners"])
        for bench in report.benchmarks:
            writer.writerow([bench, ";".join(report.winners[bench])])
    if report.consistency:
        with open(os.path.join(out_dir, "consistency.csv"), "w",
                  encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["benchmark", "model", "consistent", "t", "p",
                             "mean_diff"])
            for (bench, m), c in sorted(report.consistency.items()):
                writer.writerow([bench, m, int(c.consistent), repr(c.t),
                                 repr(c.p), repr(c.mean_diff)])
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report_tables(report))
