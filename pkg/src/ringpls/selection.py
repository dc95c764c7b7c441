"""Train/test split, k-fold selection of the component count, final fit, evaluation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTest, FoldTooSmall, RankDeficient, ShapeMismatch, TooFewRows
from .pls import PlsrModel, fit_plsr, fit_standardiser, plsr_predict, predict_standardised
from .pollution import AlignedDataset

log = logging.getLogger(__name__)

MAX_DEFAULT_CANDIDATES = 20


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    strategy: str = "random"  # or "chronological"

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.strategy not in ("random", "chronological"):
            raise ValueError(f"unknown split strategy {self.strategy!r}")


def n_train_rows(n: int, fraction: float) -> int:
    # round half up; Python's round() is banker's rounding
    return int(np.floor(fraction * n + 0.5))


def split_indices(n: int, spec: SplitSpec, order_keys=None) -> tuple[np.ndarray, np.ndarray]:
    if n < 10:
        raise TooFewRows(f"need at least 10 rows to split, got {n}")
    n_train = n_train_rows(n, spec.train_fraction)
    if spec.strategy == "random":
        perm = np.random.default_rng(spec.seed).permutation(n)
    else:
        if order_keys is None:
            perm = np.arange(n)
        else:
            perm = np.array(sorted(range(n), key=lambda i: order_keys[i]))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(dataset: AlignedDataset, spec: SplitSpec) -> tuple[AlignedDataset, AlignedDataset]:
    keys = list(zip(dataset.timestamps, dataset.station_ids))
    train_idx, test_idx = split_indices(len(dataset), spec, keys)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def rmse(y_true, y_pred) -> float:
    y_true, y_pred = _check_shapes(y_true, y_pred)
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def rmse_per_column(y_true, y_pred) -> np.ndarray:
    y_true, y_pred = _check_shapes(y_true, y_pred)
    return np.sqrt(np.mean((y_true - y_pred) ** 2, axis=0))


def _check_shapes(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.ndim == 1:
        y_true = y_true[:, None]
    if y_pred.ndim == 1:
        y_pred = y_pred[:, None]
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"{y_true.shape} != {y_pred.shape}")
    if y_true.shape[0] < 1:
        raise ShapeMismatch("need at least one row")
    return y_true, y_pred


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Fold id (0..k-1) per row; folds differ in size by at most one."""
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    for f, idx in enumerate(np.array_split(perm, k)):
        folds[idx] = f
    return folds


@dataclass
class CvReport:
    k: int
    candidates: list
    mean_rmse: np.ndarray  # NaN for infeasible candidates
    per_fold_rmse: np.ndarray  # candidates x k
    per_pollutant_rmse: np.ndarray  # candidates x m, averaged over folds
    selected_n_comp: int
    folds: np.ndarray
    infeasible: list = field(default_factory=list)
    seed: int = 0

    @property
    def selected_rmse(self) -> float:
        return float(self.mean_rmse[self.candidates.index(self.selected_n_comp)])

    def to_rows(self):
        rows = []
        for i, a in enumerate(self.candidates):
            rows.append([a, self.mean_rmse[i], *self.per_fold_rmse[i], a == self.selected_n_comp])
        return rows

    def header(self):
        return ["n_comp", "mean_rmse", *(f"fold{f + 1}_rmse" for f in range(self.k)), "selected"]

    def to_text(self) -> str:
        lines = [f"{self.k}-fold cross-validation (standardised responses, pooled over pollutants)",
                 f"{'n_comp':>6}  {'mean RMSE':>12}"]
        for i, a in enumerate(self.candidates):
            v = self.mean_rmse[i]
            mark = "  <- selected" if a == self.selected_n_comp else ""
            txt = "infeasible" if np.isnan(v) else f"{v:.6f}"
            lines.append(f"{a:>6}  {txt:>12}{mark}")
        return "\n".join(lines) + "\n"


def default_candidates(n_rows: int, n_features: int, k: int) -> list:
    smallest_train = n_rows - int(np.ceil(n_rows / k))
    return list(range(1, min(MAX_DEFAULT_CANDIDATES, n_features, smallest_train - 1) + 1))


def kfold_rmse(X, Y, k: int = 5, candidates=None, seed: int = 0, *,
               refit_standardiser: bool = True, zero_variance: str = "raise") -> CvReport:
    """Cross-validate PLS component counts.

    Every fold fit standardises its own training rows.  RMSE is measured on
    standardised held-out responses, pooled over all responses: by default in
    the fold's own units; with ``refit_standardiser=False`` in the units of a
    standardiser fitted once on all of ``X``/``Y`` (the order of operations
    where the whole training sample is z-scored before cross-validation).

    Candidates whose fit runs out of rank in any fold are reported as
    infeasible (NaN) and excluded from selection.  Each fold is fitted once
    with the largest candidate; smaller counts use its leading components.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise FoldTooSmall(f"{n} rows cannot be split into {k} folds")
    if candidates is None:
        candidates = default_candidates(n, p, k)
    candidates = [int(a) for a in candidates]
    if not candidates:
        raise FoldTooSmall("no feasible component counts for this fold size")
    folds = fold_assignment(n, k, seed)
    smallest_train = n - np.bincount(folds, minlength=k).max()
    if smallest_train < max(candidates) + 1:
        raise FoldTooSmall(
            f"smallest fold training set has {smallest_train} rows; need {max(candidates) + 1}"
        )

    global_y = None if refit_standardiser else fit_standardiser(Y)
    m = Y.shape[1]
    per_fold = np.full((len(candidates), k), np.nan)
    per_pollutant = np.zeros((len(candidates), k, m))
    # one fit per fold at the largest candidate; smaller counts are prefixes
    top = max(candidates)
    available = top
    fold_models = []
    for f in range(k):
        tr = folds != f
        try:
            model = fit_plsr(X[tr], Y[tr], top, zero_variance=zero_variance)
        except RankDeficient as exc:
            if exc.component <= 1:
                raise
            log.info("fold %d: rank exhausted at component %d", f + 1, exc.component)
            model = fit_plsr(X[tr], Y[tr], exc.component - 1, zero_variance=zero_variance)
        available = min(available, model.n_comp)
        fold_models.append(model)
    infeasible = {a for a in candidates if a > available}

    for i, a in enumerate(candidates):
        if a in infeasible:
            continue
        for f in range(k):
            te = folds == f
            model = fold_models[f]
            if a < model.n_comp:
                model = model.truncated(a)
            if global_y is None:
                y_true = model.y_standardiser.transform(Y[te])
                y_hat = predict_standardised(model, X[te])
            else:
                y_true = global_y.transform(Y[te])
                y_hat = global_y.transform(plsr_predict(model, X[te]))
            per_fold[i, f] = rmse(y_true, y_hat)
            per_pollutant[i, f] = rmse_per_column(y_true, y_hat)
    for i, a in enumerate(candidates):
        if a in infeasible:
            per_fold[i] = np.nan
            per_pollutant[i] = np.nan
    mean = per_fold.mean(axis=1)
    if np.all(np.isnan(mean)):
        raise RankDeficient(min(candidates))
    best = np.nanmin(mean)
    selected = min(a for a, v in zip(candidates, mean) if v == best)
    return CvReport(k, candidates, mean, per_fold, per_pollutant.mean(axis=1), selected, folds,
                    sorted(infeasible), seed)


def train_final(train: AlignedDataset, selected_n_comp: int, **kwargs) -> PlsrModel:
    return fit_plsr(train.X, train.Y, selected_n_comp, x_names=train.x_names,
                    y_names=train.y_names, **kwargs)


@dataclass
class Evaluation:
    names: list
    rmse: np.ndarray  # per response, original units
    rmse_standardised: np.ndarray  # per response, model's standardised units
    overall_rmse_standardised: float
    residual_mean: np.ndarray  # standardised units
    residual_std: np.ndarray  # standardised units
    residual_mean_truth_sd: np.ndarray  # bias in units of the truth's std dev
    train_rmse_standardised: float | None = None

    @property
    def overtraining_ratio(self) -> float | None:
        if self.train_rmse_standardised is None:
            return None
        if self.train_rmse_standardised == 0:
            return 1.0 if self.overall_rmse_standardised == 0 else float("inf")
        return self.overall_rmse_standardised / self.train_rmse_standardised

    def header(self):
        return ["pollutant", "rmse", "rmse_standardised", "residual_mean_standardised",
                "residual_std_standardised", "bias_truth_sd"]

    def to_rows(self):
        return [[n, *vals] for n, *vals in zip(self.names, self.rmse, self.rmse_standardised,
                                                self.residual_mean, self.residual_std,
                                                self.residual_mean_truth_sd)]


def evaluate(model: PlsrModel, test: AlignedDataset, train: AlignedDataset | None = None) -> Evaluation:
    if len(test) == 0:
        raise EmptyTest("test set is empty")
    pred = plsr_predict(model, test.X)
    ys = model.y_standardiser
    z_true, z_pred = ys.transform(test.Y), ys.transform(pred)
    res = z_pred - z_true
    truth_sd = test.Y.std(axis=0, ddof=1) if len(test) > 1 else np.full(test.Y.shape[1], np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        bias = (pred - test.Y).mean(axis=0) / truth_sd
    train_rmse = None
    if train is not None:
        train_rmse = rmse(ys.transform(train.Y), ys.transform(plsr_predict(model, train.X)))
    return Evaluation(
        names=list(model.y_names),
        rmse=rmse_per_column(test.Y, pred),
        rmse_standardised=rmse_per_column(z_true, z_pred),
        overall_rmse_standardised=rmse(z_true, z_pred),
        residual_mean=res.mean(axis=0),
        residual_std=res.std(axis=0, ddof=1) if len(test) > 1 else np.zeros(res.shape[1]),
        residual_mean_truth_sd=bias,
        train_rmse_standardised=train_rmse,
    )


@dataclass
class RangeRow:
    variable: str
    reference_min: float
    reference_max: float
    validation_min: float
    validation_max: float
    overlap: float
    flagged: bool


def compare_ranges(reference: AlignedDataset, validation: AlignedDataset, threshold: float = 0.9):
    """Fraction of each variable's validation range covered by the reference range."""
    ref = np.hstack([reference.X, reference.Y])
    val = np.hstack([validation.X, validation.Y])
    names = list(reference.x_names) + list(reference.y_names)
    if ref.shape[1] != val.shape[1]:
        raise ShapeMismatch("datasets do not share a variable schema")
    rows = []
    for j, name in enumerate(names):
        rlo, rhi = ref[:, j].min(), ref[:, j].max()
        vlo, vhi = val[:, j].min(), val[:, j].max()
        if vhi > vlo:
            overlap = max(0.0, min(rhi, vhi) - max(rlo, vlo)) / (vhi - vlo)
        else:
            overlap = 1.0 if rlo <= vlo <= rhi else 0.0
        rows.append(RangeRow(name, rlo, rhi, vlo, vhi, overlap, overlap < threshold))
    return rows
