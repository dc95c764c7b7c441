"""Analytic outputs: correlations, hourly profiles, VIP, station similarity, residuals."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ComponentOutOfRange, ConstantColumn, DegenerateModel, ShapeMismatch
from .pls import PlsrModel

DEFAULT_CHI2_BINS = 20


def pearson_matrix(data, labels=None) -> np.ndarray:
    """Pearson correlation between columns; unit diagonal, exactly symmetric."""
    data = np.asarray(data, dtype=float)
    n, k = data.shape
    if n < 3:
        raise ValueError(f"need at least 3 rows, got {n}")
    centred = data - data.mean(axis=0)
    norms = np.sqrt((centred ** 2).sum(axis=0))
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        j = int(bad[0])
        raise ConstantColumn(f"column {labels[j] if labels is not None else j} is constant")
    z = centred / norms
    r = z.T @ z
    r = np.clip((r + r.T) / 2, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def cross_correlation(X, Y) -> np.ndarray:
    """Pearson r between every column of ``Y`` (rows) and of ``X`` (columns)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    r = pearson_matrix(np.hstack([X, Y]))
    p = X.shape[1]
    return r[p:, :p]


@dataclass
class HourlyProfile:
    means: np.ndarray  # 24 values, NaN where no data
    counts: np.ndarray  # 24 ints

    def present(self, hour: int) -> bool:
        return bool(self.counts[hour])


def hourly_profile(timestamps, values) -> HourlyProfile:
    """Mean per civil hour of day; NaN values are ignored, empty hours stay absent."""
    sums = np.zeros(24)
    counts = np.zeros(24, dtype=int)
    for ts, v in zip(timestamps, values):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        sums[ts.hour] += v
        counts[ts.hour] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return HourlyProfile(means, counts)


@dataclass
class VipReport:
    scores: np.ndarray
    weights: np.ndarray  # p x n_comp
    ssy: np.ndarray
    ssy_total: float
    names: list = field(default_factory=list)

    @property
    def important(self) -> np.ndarray:
        return self.scores > 1.0


def vip_scores(model: PlsrModel, ssy_total: str = "explained") -> VipReport:
    """Variable importance in projection.

    ``ssy_total="explained"`` divides by the response sum of squares the
    model explains (so the squared scores sum to the number of predictors);
    ``"total"`` divides by the full standardised-response sum of squares.
    """
    if model.n_comp < 1:
        raise DegenerateModel("model has no components")
    W = model.x_weights
    ssy = np.asarray(model.ssy, dtype=float)
    if ssy_total == "explained":
        total = float(ssy.sum())
    elif ssy_total == "total":
        total = float(model.y_total_ss)
    else:
        raise ValueError(f"unknown ssy_total convention {ssy_total!r}")
    if total == 0:
        raise DegenerateModel("model explains no response variance")
    J = W.shape[0]
    scores = np.sqrt(J * (W ** 2 @ ssy) / total)
    return VipReport(scores, W, ssy, total, list(model.x_names))


def normalise_vip(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    top = scores.max()
    if top <= 0:
        raise DegenerateModel("all VIP scores are zero")
    return scores / top


@dataclass
class SimilarityScore:
    station_u: str
    station_v: str
    chi2_weighted: float
    per_variable_terms: np.ndarray  # unweighted chi-square per variable
    bins: int
    omega: np.ndarray
    degenerate: list = field(default_factory=list)  # variables with zero pooled range


def _chi2_term(u, v, bins):
    lo = min(u.min(), v.min())
    hi = max(u.max(), v.max())
    if not hi > lo:
        return 0.0, True
    edges = np.linspace(lo, hi, bins + 1)
    o_u = np.histogram(u, edges)[0].astype(float)
    o_v = np.histogram(v, edges)[0].astype(float)
    n_u, n_v = float(u.size), float(v.size)
    pooled = o_u + o_v
    e_u = pooled * n_u / (n_u + n_v)  # integer products stay exact
    e_v = pooled * n_v / (n_u + n_v)
    used = pooled > 0
    term = ((o_u[used] - e_u[used]) ** 2 / e_u[used] + (o_v[used] - e_v[used]) ** 2 / e_v[used]).sum()
    return float(term), False


def _zscore_columns(a):
    sd = a.std(axis=0, ddof=1) if a.shape[0] > 1 else np.zeros(a.shape[1])
    return np.where(sd > 0, (a - a.mean(axis=0)) / np.where(sd > 0, sd, 1.0), 0.0)


def weighted_chi2(u_data, v_data, omega, bins: int = DEFAULT_CHI2_BINS, *,
                  station_u: str = "u", station_v: str = "v",
                  standardised: bool = False, names=None) -> SimilarityScore:
    """VIP-weighted two-sample chi-square between two stations' predictor samples.

    Per variable both samples are histogrammed on shared equal-width bins
    over their pooled range.  With ``standardised`` each sample is z-scored
    on its own first, so only distribution shapes are compared.
    """
    u = np.atleast_2d(np.asarray(u_data, dtype=float))
    v = np.atleast_2d(np.asarray(v_data, dtype=float))
    omega = np.asarray(omega, dtype=float)
    if u.shape[0] < 1 or v.shape[0] < 1:
        raise ShapeMismatch("each sample needs at least one row")
    if u.shape[1] != v.shape[1] or omega.shape != (u.shape[1],):
        raise ShapeMismatch(f"column counts differ: {u.shape[1]}, {v.shape[1]}, omega {omega.shape}")
    if np.any(omega < 0) or np.any(omega > 1):
        raise ValueError("omega must be normalised to [0, 1]")
    if standardised:
        u, v = _zscore_columns(u), _zscore_columns(v)
    terms = np.zeros(u.shape[1])
    degenerate = []
    for j in range(u.shape[1]):
        terms[j], flat = _chi2_term(u[:, j], v[:, j], bins)
        if flat:
            degenerate.append(names[j] if names is not None else j)
    return SimilarityScore(station_u, station_v, float((terms * omega).sum()), terms, bins,
                           omega, degenerate)


def rank_similarity(validation_station: str, validation_data, candidates: dict, omega,
                    bins: int = DEFAULT_CHI2_BINS, **kwargs) -> list:
    """Score every candidate against the validation station, most similar first."""
    scores = [weighted_chi2(validation_data, data, omega, bins, station_u=validation_station,
                            station_v=sid, **kwargs)
              for sid, data in candidates.items()]
    return sorted(scores, key=lambda s: s.chi2_weighted)


@dataclass
class ResidualStats:
    name: str
    bias: float  # mean residual / std(truth)
    std: float  # std(residual) / std(truth)
    skew: float
    normal: bool | None  # None when the sample is too small to test
    band: str


NORMALITY_MIN_SAMPLES = 20
NORMALITY_ALPHA = 0.05


def bias_band(bias: float) -> str:
    b = abs(bias)
    if b < 1:
        return "<1"
    if b <= 2:
        return "1-2"
    return ">2"


def residual_report(y_true, y_pred, labels=None) -> list:
    """Per-response residual (prediction minus truth) summary in truth-sd units."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.ndim == 1:
        y_true, y_pred = y_true[:, None], (y_pred[:, None] if y_pred.ndim == 1 else y_pred)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"{y_true.shape} != {y_pred.shape}")
    labels = labels if labels is not None else [f"y{j + 1}" for j in range(y_true.shape[1])]
    out = []
    for j, name in enumerate(labels):
        truth, res = y_true[:, j], y_pred[:, j] - y_true[:, j]
        sd = truth.std(ddof=1) if truth.size > 1 else math.nan
        res_sd = res.std(ddof=1) if res.size > 1 else 0.0
        if res_sd <= 1e-12 * np.abs(res).max(initial=0.0):
            res_sd = 0.0  # constant up to rounding
        bias = res.mean() / sd if sd > 0 else math.nan
        spread = res_sd / sd if sd > 0 else math.nan
        if res_sd > 0 and res.size > 2:
            skew = float(stats.skew(res))
        else:
            skew = 0.0
        normal = None
        if res.size >= NORMALITY_MIN_SAMPLES and res_sd > 0:
            normal = bool(stats.normaltest(res).pvalue >= NORMALITY_ALPHA)
        out.append(ResidualStats(name, float(bias), float(spread), skew, normal,
                                 bias_band(bias) if not math.isnan(bias) else "n/a"))
    return out


@dataclass(frozen=True)
class ThresholdPolicy:
    """Mexico City environmental contingency thresholds."""

    o3_ppb: float = 155.0
    pm10_ugm3: float = 214.0
    pm25_ugm3: float = 97.4

    def __post_init__(self):
        if min(self.o3_ppb, self.pm10_ugm3, self.pm25_ugm3) <= 0:
            raise ValueError("thresholds must be positive")

    def by_pollutant(self) -> dict:
        return {"O3": self.o3_ppb, "PM10": self.pm10_ugm3, "PM2.5": self.pm25_ugm3}


def exceedance_flags(records, policy: ThresholdPolicy = ThresholdPolicy()) -> list:
    """Per record, ``{pollutant: value > threshold}``; a null value is never flagged."""
    limits = policy.by_pollutant()
    out = []
    for r in records:
        flags = {}
        for name, limit in limits.items():
            v = r.value(name)
            flags[name] = v is not None and v > limit
        out.append(flags)
    return out


@dataclass
class ComponentWeights:
    component: int
    x_names: list
    x_weights: np.ndarray
    y_names: list
    y_loadings: np.ndarray


def component_weight_report(model: PlsrModel, component: int = 1) -> ComponentWeights:
    """Input weights and output loadings of one (1-based) component."""
    if not 1 <= component <= model.n_comp:
        raise ComponentOutOfRange(f"component {component} outside 1..{model.n_comp}")
    f = component - 1
    return ComponentWeights(component, list(model.x_names), model.x_weights[:, f].copy(),
                            list(model.y_names), model.y_loadings[:, f].copy())


def write_long(path, rows) -> None:
    """Plot-ready long format: ``variable,category,value``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["variable", "category", "value"])
        for variable, category, value in rows:
            out.writerow([variable, category, _cell(value)])


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return v
