"""Paired counterfactual effects and observational statistics.

Ingests classifier scores keyed by (start id, configuration) and
computes within-start paired differences against baseline with
t-distribution confidence intervals and two-sided p-values, the
visual-fidelity filter, the strict low-baseline subset, cross-family
contrast ratios, Spearman rank correlation, per-SD and quintile odds
ratios, and subject-level cohort deduplication.

The Student-t machinery is self-contained: the CDF evaluates the
regularized incomplete beta function by continued fraction, and
quantiles are found by bisection.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from vesseltree.errors import ConvergenceError, SeparationError
from vesseltree.perturb import CAUSAL_TABLE_ORDER, CONFIG_NAMES

BASELINE = "baseline"
STRICT_PROB_THRESHOLD = 0.3

# visual-fidelity thresholds on the start's baseline generation
FIDELITY_MEAN_RANGE = (50.0, 170.0)
FIDELITY_MIN_STD = 25.0
FIDELITY_MIN_RG_RATIO = 1.3

_Z975 = 1.959963984540054

SCORES_HEADER = ("start_id", "config", "prob", "mean_intensity", "std_intensity", "rg_ratio")
COHORT_HEADER = ("image_id", "base_id", "split", "label")


# ---------------------------------------------------------------------------
# Student-t distribution via the regularized incomplete beta function

def _betacf(a, b, x):
    # Lentz's continued fraction for the incomplete beta integral
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
    for m in range(1, 300):
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
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a, b, x):
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t, df):
    """P(|T_df| >= |t|)."""
    if df < 1:
        raise ValueError("degrees of freedom must be >= 1")
    t = float(t)
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def t_cdf(t, df):
    p = t_two_sided_p(t, df)
    return 1.0 - p / 2.0 if t >= 0 else p / 2.0


def t_quantile(p, df):
    """Inverse CDF by bisection to 1e-10 (absolute or relative).

    Bisects on the two-sided tail probability, which keeps full
    floating-point resolution far out in the tails where the CDF
    saturates at 1.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -t_quantile(1.0 - p, df)
    target = 2.0 * (1.0 - p)  # two-sided tail mass at the quantile
    lo, hi = 0.0, 1.0
    while t_two_sided_p(hi, df) > target:
        hi *= 2.0
        if hi > 1e300:
            raise ConvergenceError("t quantile bracket expansion failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo < 1e-10 * max(1.0, lo):
            break
        if t_two_sided_p(mid, df) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def t_confidence_interval(mean, sem, n, level=0.95):
    """Two-sided Student-t interval for a mean given its SEM."""
    if n < 2:
        raise ValueError("confidence interval needs n >= 2")
    q = t_quantile(1.0 - (1.0 - level) / 2.0, n - 1)
    return mean - q * sem, mean + q * sem


# ---------------------------------------------------------------------------
# Score ingestion

@dataclass(frozen=True)
class ScoreRecord:
    start_id: str
    config: str
    prob: float
    mean_intensity: float
    std_intensity: float
    rg_ratio: float

    def __post_init__(self):
        if self.config not in CONFIG_NAMES:
            raise ValueError(f"unknown configuration {self.config!r}")
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError(f"probability out of [0, 1]: {self.prob}")


class ScoreTable:
    """Immutable collection of score records, unique per (start, config)."""

    def __init__(self, records):
        records = tuple(records)
        seen = set()
        for r in records:
            key = (r.start_id, r.config)
            if key in seen:
                raise ValueError(f"duplicate score record for {key}")
            seen.add(key)
        self.records = records

    def __len__(self):
        return len(self.records)

    def by_config(self, config):
        return {r.start_id: r for r in self.records if r.config == config}

    @property
    def configs(self):
        return sorted({r.config for r in self.records})

    @property
    def starts(self):
        return sorted({r.start_id for r in self.records})

    def restrict_to(self, start_ids):
        keep = set(start_ids)
        return ScoreTable(r for r in self.records if r.start_id in keep)

    @classmethod
    def from_csv(cls, path):
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(row for row in fh if not row.startswith("#"))
            header = next(reader, None)
            if header is None or tuple(header) != SCORES_HEADER:
                raise ValueError(
                    f"scores CSV must start with header {','.join(SCORES_HEADER)}"
                )
            records = []
            for row in reader:
                if not row:
                    continue
                records.append(ScoreRecord(
                    start_id=row[0],
                    config=row[1],
                    prob=float(row[2]),
                    mean_intensity=float(row[3]),
                    std_intensity=float(row[4]),
                    rg_ratio=float(row[5]),
                ))
        return cls(records)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(SCORES_HEADER)
            for r in self.records:
                writer.writerow((r.start_id, r.config, repr(r.prob),
                                 repr(r.mean_intensity), repr(r.std_intensity),
                                 repr(r.rg_ratio)))
        return path


@dataclass(frozen=True)
class PairedEffect:
    config: str
    n: int
    delta_mean: float
    sem: float
    ci_low: float
    ci_high: float
    p_value: float
    n_skipped: int = 0

    def __post_init__(self):
        if not self.ci_low <= self.delta_mean <= self.ci_high:
            raise ValueError("confidence interval must bracket the mean")


def paired_deltas(table, config):
    """Per-start differences config minus baseline, sorted by start id.

    Returns (start_ids, deltas, n_skipped); a start lacking a baseline
    record is skipped and tallied.
    """
    base = table.by_config(BASELINE)
    pert = table.by_config(config)
    matched = sorted(s for s in pert if s in base)
    skipped = len(pert) - len(matched)
    deltas = np.array([pert[s].prob - base[s].prob for s in matched], dtype=np.float64)
    return matched, deltas, skipped


def paired_delta(table, config):
    """Within-start paired effect of one configuration against baseline.

    delta_i = prob(config, i) - prob(baseline, i); the mean is reported
    with its SEM (sample standard deviation over sqrt(n)), a 95%
    Student-t interval at df = n - 1, and a two-sided p-value testing
    zero mean. Any per-start additive bias present in both arms cancels
    exactly in delta_i.
    """
    _, deltas, skipped = paired_deltas(table, config)
    n = len(deltas)
    if n < 2:
        raise ValueError(f"config {config!r}: need >= 2 paired starts, got {n}")
    mean = float(deltas.mean())
    sd = float(deltas.std(ddof=1))
    sem = sd / math.sqrt(n)
    if sem == 0.0:
        return PairedEffect(config=config, n=n, delta_mean=mean, sem=0.0,
                            ci_low=mean, ci_high=mean,
                            p_value=1.0 if mean == 0.0 else 0.0,
                            n_skipped=skipped)
    ci_low, ci_high = t_confidence_interval(mean, sem, n)
    p = t_two_sided_p(mean / sem, n - 1)
    return PairedEffect(config=config, n=n, delta_mean=mean, sem=sem,
                        ci_low=ci_low, ci_high=ci_high, p_value=p,
                        n_skipped=skipped)


def fidelity_filter(record):
    """Visual-fidelity gate on a start's baseline generation statistics.

    Passes when mean intensity lies in [50, 170], pixel standard
    deviation exceeds 25, and the red-to-green ratio exceeds 1.3.
    Returns (passed, fail_reason).
    """
    for v in (record.mean_intensity, record.std_intensity, record.rg_ratio):
        if not math.isfinite(v):
            raise ValueError(f"start {record.start_id!r}: missing fidelity stats")
    if record.mean_intensity < FIDELITY_MEAN_RANGE[0]:
        return False, "near-black collapse"
    if record.mean_intensity > FIDELITY_MEAN_RANGE[1]:
        return False, "bright-white collapse"
    if not record.std_intensity > FIDELITY_MIN_STD:
        return False, "monochromatic collapse"
    if not record.rg_ratio > FIDELITY_MIN_RG_RATIO:
        return False, "gray/blue drift"
    return True, None


def strict_subset(table, threshold=STRICT_PROB_THRESHOLD):
    """Start ids with baseline probability below threshold passing fidelity."""
    base = table.by_config(BASELINE)
    out = set()
    for start, rec in base.items():
        if rec.prob < threshold and fidelity_filter(rec)[0]:
            out.add(start)
    return out


def contrast_ratio(effects, a, b):
    """|delta(a)| / |delta(b)|, or None when the denominator vanishes."""
    if a not in effects or b not in effects:
        missing = a if a not in effects else b
        raise KeyError(f"no paired effect for config {missing!r}")
    denom = abs(effects[b].delta_mean)
    if denom < 1e-9:
        return None
    return abs(effects[a].delta_mean) / denom


# ---------------------------------------------------------------------------
# Observational statistics

def _average_ranks(values):
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=np.float64)
    sv = v[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y):
    """Spearman rank correlation with average ranks for ties.

    Returns (rho, p) with p from t = rho * sqrt((n-2) / (1-rho^2)),
    two-sided at df = n - 2.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D arrays")
    n = len(x)
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ValueError("correlation undefined for a constant vector")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    rho = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))
    if abs(rho) >= 1.0:
        return (1.0 if rho > 0 else -1.0), 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, t_two_sided_p(t, n - 2)


@dataclass(frozen=True)
class LogisticResult:
    or_per_sd: float
    ci_low: float
    ci_high: float
    slope: float
    se: float
    iterations: int


def logistic_or(feature, label, max_iter=50, tol=1e-8):
    """Per-SD odds ratio from univariate logistic regression (IRLS).

    The feature is z-scored first, so the exponentiated slope is the
    odds ratio per standard deviation; the CI is Wald. Divergence
    (|slope| > 30) raises SeparationError.
    """
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D arrays")
    n = len(x)
    if n < 10:
        raise ValueError(f"need n >= 10, got {n}")
    classes = np.unique(y)
    if not np.isin(classes, (0.0, 1.0)).all() or len(classes) != 2:
        raise ValueError("labels must contain both classes 0 and 1")
    sd = x.std()
    if sd == 0:
        raise ValueError("feature is constant")
    z = (x - x.mean()) / sd
    design = np.column_stack([np.ones(n), z])
    beta = np.zeros(2)
    info = None
    for iteration in range(1, max_iter + 1):
        eta = design @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        w = p * (1.0 - p)
        info = design.T @ (design * w[:, None])
        grad = design.T @ (y - p)
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise SeparationError(f"singular information matrix: {exc}") from exc
        beta = beta + step
        if abs(beta[1]) > 30.0:
            raise SeparationError(
                "slope diverged beyond 30; classes appear separated"
            )
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations")
    se = math.sqrt(np.linalg.inv(info)[1, 1])
    slope = float(beta[1])
    return LogisticResult(
        or_per_sd=math.exp(slope),
        ci_low=math.exp(slope - _Z975 * se),
        ci_high=math.exp(slope + _Z975 * se),
        slope=slope,
        se=se,
        iterations=iteration,
    )


@dataclass(frozen=True)
class QuintileResult:
    odds_ratio: float
    ci_low: float
    ci_high: float
    q1_cases: float
    q1_controls: float
    q5_cases: float
    q5_controls: float
    corrected: bool


def quintile_bins(feature):
    """Rank-based quintile index per observation, ties to the lower bin."""
    x = np.asarray(feature, dtype=np.float64)
    n = len(x)
    order = np.argsort(x, kind="stable")
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    bins = pos * 5 // n
    sv = x[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        if j > i:
            low = bins[order[i]]
            bins[order[i : j + 1]] = low
        i = j + 1
    return bins


def quintile_or(feature, label):
    """Top-versus-bottom quintile odds ratio from the 2x2 table.

    Uses the Haldane-Anscombe 0.5 correction when any cell is empty;
    the CI is Wald on the log odds ratio.
    """
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D arrays")
    n = len(x)
    if n < 50:
        raise ValueError(f"need n >= 50, got {n}")
    bins = quintile_bins(x)
    q1 = bins == 0
    q5 = bins == 4
    if not q1.any() or not q5.any():
        raise ValueError("empty quintile (too many ties)")
    d1 = float(np.sum(y[q1] == 1))
    h1 = float(np.sum(y[q1] == 0))
    d5 = float(np.sum(y[q5] == 1))
    h5 = float(np.sum(y[q5] == 0))
    corrected = 0.0 in (d1, h1, d5, h5)
    if corrected:
        d1 += 0.5
        h1 += 0.5
        d5 += 0.5
        h5 += 0.5
    ratio = (d5 / h5) / (d1 / h1)
    log_se = math.sqrt(1.0 / d5 + 1.0 / h5 + 1.0 / d1 + 1.0 / h1)
    return QuintileResult(
        odds_ratio=ratio,
        ci_low=math.exp(math.log(ratio) - _Z975 * log_se),
        ci_high=math.exp(math.log(ratio) + _Z975 * log_se),
        q1_cases=d1,
        q1_controls=h1,
        q5_cases=d5,
        q5_controls=h5,
        corrected=corrected,
    )


# ---------------------------------------------------------------------------
# Cohort deduplication

@dataclass(frozen=True)
class CohortRow:
    image_id: str
    base_id: str
    split: str
    label: int

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"split must be train/val/test, got {self.split!r}")


def dedupe_cohort(rows):
    """Subject-level deduplication in two passes.

    Cross-split anti-leakage drops train rows whose base id appears in
    test. In-split collapse keeps one row per base id within val and
    within test, the one with the lexicographically smallest image id.
    Returns (kept rows, removal report).
    """
    rows = list(rows)
    ids = [r.image_id for r in rows]
    if len(set(ids)) != len(ids):
        raise ValueError("image ids must be unique")
    test_bases = {r.base_id for r in rows if r.split == "test"}

    keep_leak = [r for r in rows if not (r.split == "train" and r.base_id in test_bases)]
    n_leak = len(rows) - len(keep_leak)

    chosen = {}
    for r in keep_leak:
        if r.split in ("val", "test"):
            key = (r.split, r.base_id)
            if key not in chosen or r.image_id < chosen[key]:
                chosen[key] = r.image_id

    kept = []
    n_val = n_test = 0
    for r in keep_leak:
        if r.split in ("val", "test") and chosen[(r.split, r.base_id)] != r.image_id:
            if r.split == "val":
                n_val += 1
            else:
                n_test += 1
            continue
        kept.append(r)
    report = {
        "train_removed_anti_leakage": n_leak,
        "val_collapsed": n_val,
        "test_collapsed": n_test,
        "total_removed": n_leak + n_val + n_test,
    }
    return kept, report


def read_cohort_csv(path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None or tuple(header) != COHORT_HEADER:
            raise ValueError(f"cohort CSV must start with header {','.join(COHORT_HEADER)}")
        return [CohortRow(row[0], row[1], row[2], int(row[3])) for row in reader if row]


def write_cohort_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COHORT_HEADER)
        for r in rows:
            writer.writerow((r.image_id, r.base_id, r.split, r.label))
    return path


# ---------------------------------------------------------------------------
# Report rendering

def _fmt(v, digits=4):
    return f"{v:+.{digits}f}" if isinstance(v, float) else str(v)


def emit_causal_table(effects):
    """Render paired effects in the canonical cross-condition order.

    Returns (csv_text, aligned_text). The baseline row is fixed at zero
    by definition; configurations without an effect render as em-dash
    placeholders.
    """
    csv_lines = ["config,n,delta_mean,sem,ci_low,ci_high,p_value"]
    rows = []
    for name in CAUSAL_TABLE_ORDER:
        if name == BASELINE:
            n = effects[name].n if name in effects else ""
            csv_lines.append(f"baseline,{n},0,,,,")
            rows.append(("baseline", str(n), "0 (by def.)", "", "", ""))
        elif name in effects:
            e = effects[name]
            csv_lines.append(
                f"{name},{e.n},{e.delta_mean!r},{e.sem!r},{e.ci_low!r},"
                f"{e.ci_high!r},{e.p_value!r}"
            )
            rows.append((
                name,
                str(e.n),
                _fmt(e.delta_mean),
                f"{e.sem:.4f}",
                f"[{e.ci_low:+.4f}, {e.ci_high:+.4f}]",
                f"{e.p_value:.3g}",
            ))
        else:
            csv_lines.append(f"{name},—,—,—,—,—,—")
            rows.append((name, "—", "—", "—", "—", "—"))
    headers = ("config", "n", "delta", "sem", "95% CI", "p")
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(6)]
    text_lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    text_lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        text_lines.append("  ".join(r[i].ljust(widths[i]) for i in range(6)))
    return "\n".join(csv_lines) + "\n", "\n".join(text_lines) + "\n"


def observational_report(feature_columns, labels):
    """Per-feature Spearman rho, per-SD OR, and Q5/Q1 OR table.

    ``feature_columns`` maps feature name to its value array. Features
    whose statistics cannot be computed render as "n/a" entries.
    Returns (csv_text, aligned_text).
    """
    labels = np.asarray(labels)
    csv_lines = ["feature,spearman_rho,spearman_p,or_per_sd,or_ci_low,or_ci_high,"
                 "q5q1_or,q5q1_ci_low,q5q1_ci_high"]
    rows = []
    for name, values in feature_columns.items():
        try:
            rho, p = spearman(values, labels)
            rho_s, p_s = f"{rho:+.4f}", f"{p:.3g}"
        except (ValueError, ConvergenceError):
            rho, p = None, None
            rho_s = p_s = "n/a"
        try:
            lo = logistic_or(values, labels)
            or_s = f"{lo.or_per_sd:.4f}"
            or_ci = (f"{lo.ci_low:.4f}", f"{lo.ci_high:.4f}")
        except (ValueError, SeparationError, ConvergenceError):
            lo = None
            or_s, or_ci = "n/a", ("n/a", "n/a")
        try:
            q = quintile_or(values, labels)
            q_s = f"{q.odds_ratio:.4f}"
            q_ci = (f"{q.ci_low:.4f}", f"{q.ci_high:.4f}")
        except (ValueError, ConvergenceError):
            q = None
            q_s, q_ci = "n/a", ("n/a", "n/a")
        csv_lines.append(
            f"{name},{rho_s},{p_s},{or_s},{or_ci[0]},{or_ci[1]},{q_s},{q_ci[0]},{q_ci[1]}"
        )
        rows.append((name, rho_s, p_s, or_s, q_s))
    headers = ("feature", "spearman", "p", "OR/SD", "Q5/Q1 OR")
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(5)]
    text_lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    text_lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        text_lines.append("  ".join(r[i].ljust(widths[i]) for i in range(5)))
    return "\n".join(csv_lines) + "\n", "\n".join(text_lines) + "\n"
