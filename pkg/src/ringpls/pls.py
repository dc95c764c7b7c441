"""Partial least squares regression (PLS2) fitted by NIPALS.

Both blocks are z-scored, then components are extracted one at a time:

    X0 = T P' + E        Y0 = T Q' + F        Y0_hat = X0 B,  B = W (P'W)^-1 Q'

with unit-norm weights ``W``, mutually orthogonal X-scores ``T``, X-loadings
``P`` and Y-loadings ``Q``.  ``U`` holds the Y-scores of the inner iteration.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceFailure, DimensionMismatch, RankDeficient, ZeroVariance

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
NIPALS_TOL = 1e-10
NIPALS_MAX_ITER = 500
RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Standardiser:
    means: np.ndarray
    stds: np.ndarray

    def transform(self, data) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.means) / self.stds

    def inverse_transform(self, data) -> np.ndarray:
        return np.asarray(data, dtype=float) * self.stds + self.means


def fit_standardiser(data, names=None, zero_variance: str = "raise") -> Standardiser:
    """Column means and sample standard deviations (ddof=1).

    A constant column raises :class:`ZeroVariance`; with
    ``zero_variance="unit"`` it is centred and given a scale of 1 instead,
    so it enters a model as an all-zero predictor.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a 2-D array with at least two rows")
    means = data.mean(axis=0)
    stds = data.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(stds > 0))
    if bad.size and zero_variance == "unit":
        stds = np.where(stds > 0, stds, 1.0)
    elif bad.size:
        j = int(bad[0])
        raise ZeroVariance(names[j] if names is not None else j)
    return Standardiser(means, stds)


@dataclass(frozen=True, eq=False)
class PlsrModel:
    n_comp: int
    x_weights: np.ndarray  # W, p x a
    x_loadings: np.ndarray  # P, p x a
    y_loadings: np.ndarray  # Q, m x a
    x_scores: np.ndarray  # T, n x a
    y_scores: np.ndarray  # U, n x a
    coefficients: np.ndarray  # B, p x m (standardised units)
    ssy: np.ndarray  # explained Y sum of squares per component
    y_total_ss: float  # ||Y0||^2 of the training responses
    x_standardiser: Standardiser
    y_standardiser: Standardiser
    x_names: list = field(default_factory=list)
    y_names: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("x_weights", "x_loadings", "y_loadings", "x_scores", "y_scores",
                     "coefficients", "ssy"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))

    @property
    def n_features(self) -> int:
        return self.x_weights.shape[0]

    @property
    def n_targets(self) -> int:
        return self.y_loadings.shape[0]

    @property
    def n_samples(self) -> int:
        return self.x_scores.shape[0]

    def truncated(self, n_comp: int) -> "PlsrModel":
        """The model made of the first ``n_comp`` components.

        Components are extracted sequentially, so this equals a fresh fit
        with ``n_comp`` components on the same data.
        """
        if not 1 <= n_comp <= self.n_comp:
            raise ValueError(f"n_comp must lie in 1..{self.n_comp}")
        W, P, Q = (np.ascontiguousarray(a[:, :n_comp])
                   for a in (self.x_weights, self.x_loadings, self.y_loadings))
        return PlsrModel(
            n_comp=n_comp, x_weights=W, x_loadings=P, y_loadings=Q,
            x_scores=self.x_scores[:, :n_comp], y_scores=self.y_scores[:, :n_comp],
            coefficients=W @ np.linalg.solve(P.T @ W, Q.T), ssy=self.ssy[:n_comp],
            y_total_ss=self.y_total_ss, x_standardiser=self.x_standardiser,
            y_standardiser=self.y_standardiser, x_names=self.x_names, y_names=self.y_names,
        )

    def fitted_standardised(self) -> np.ndarray:
        """Training predictions in standardised units, from the score decomposition."""
        return self.x_scores @ self.y_loadings.T


def plsr_fit(X0, Y0, n_comp: int, *, tol: float = NIPALS_TOL, max_iter: int = NIPALS_MAX_ITER,
             x_standardiser: Standardiser | None = None,
             y_standardiser: Standardiser | None = None,
             x_names=None, y_names=None) -> PlsrModel:
    """Fit PLS2 on already standardised blocks ``X0`` (n x p) and ``Y0`` (n x m).

    The Y-score starts at the residual Y column with the largest sum of
    squares; the inner loop stops once successive weight vectors differ by
    less than ``tol``, and the converged weight is then snapped onto the
    exact fixed point (see ``_polish``).  Each weight vector is signed so its
    largest-magnitude entry is positive.
    """
    X = np.array(X0, dtype=float)
    Y = np.array(Y0, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = X.shape
    if Y.shape[0] != n:
        raise DimensionMismatch(f"X has {n} rows, Y has {Y.shape[0]}")
    m = Y.shape[1]
    if not (1 <= n_comp <= p and n_comp < n):
        raise ValueError(f"n_comp={n_comp} must satisfy 1 <= n_comp <= p={p} and n_comp < n={n}")

    x_norm0 = np.linalg.norm(X)
    y_norm0 = np.linalg.norm(Y)
    xy_norm0 = np.linalg.norm(X.T @ Y)
    y_total_ss = float(y_norm0 ** 2)
    W = np.zeros((p, n_comp))
    P = np.zeros((p, n_comp))
    Q = np.zeros((m, n_comp))
    T = np.zeros((n, n_comp))
    U = np.zeros((n, n_comp))

    for a in range(n_comp):
        if np.linalg.norm(X) <= RANK_TOL * x_norm0 or np.linalg.norm(Y) <= RANK_TOL * y_norm0:
            raise RankDeficient(a + 1)
        if np.linalg.norm(X.T @ Y) <= RANK_TOL * xy_norm0:
            # Y residual is uncorrelated with every X direction: the weight is
            # undefined, and any choice gets a zero Y-loading.  Take the
            # leading X direction so the extraction stays deterministic.
            log.debug("component %d: no remaining X-Y covariance", a + 1)
            w = np.linalg.svd(X, full_matrices=False)[2][0]
            w_from_nipals = False
        else:
            w_from_nipals = True
            u = Y[:, int(np.argmax((Y ** 2).sum(axis=0)))].copy()
            w = _nipals_weight(X, Y, u, tol, max_iter)
        if w is None:
            # Slow power iteration (near-equal leading singular values of X'Y):
            # restart from the fixed point itself.
            _, _, vt = np.linalg.svd(X.T @ Y, full_matrices=False)
            log.debug("component %d: NIPALS restarted from the SVD direction", a + 1)
            w = _nipals_weight(X, Y, Y @ vt[0], tol, max_iter)
            if w is None:
                raise ConvergenceFailure(a + 1, max_iter)
        if w is False:
            raise RankDeficient(a + 1)
        if w_from_nipals:
            w = _polish(X, Y, w)
        u = _y_score(X, Y, w)

        t = X @ w
        tt = t @ t
        if tt <= (RANK_TOL * x_norm0) ** 2:
            raise RankDeficient(a + 1)
        p_a = X.T @ t / tt
        q_a = Y.T @ t / tt
        if w[np.argmax(np.abs(w))] < 0:
            w, t, p_a, q_a, u = -w, -t, -p_a, -q_a, -u
        X -= np.outer(t, p_a)
        Y -= np.outer(t, q_a)
        W[:, a], P[:, a], Q[:, a], T[:, a], U[:, a] = w, p_a, q_a, t, u

    B = W @ np.linalg.solve(P.T @ W, Q.T)
    ssy = (T ** 2).sum(axis=0) * (Q ** 2).sum(axis=0)

    if x_standardiser is None:
        x_standardiser = Standardiser(np.zeros(p), np.ones(p))
    if y_standardiser is None:
        y_standardiser = Standardiser(np.zeros(m), np.ones(m))
    return PlsrModel(
        n_comp=n_comp, x_weights=W, x_loadings=P, y_loadings=Q, x_scores=T, y_scores=U,
        coefficients=B, ssy=ssy, y_total_ss=y_total_ss,
        x_standardiser=x_standardiser, y_standardiser=y_standardiser,
        x_names=list(x_names) if x_names is not None else [f"x{j + 1}" for j in range(p)],
        y_names=list(y_names) if y_names is not None else [f"y{j + 1}" for j in range(m)],
    )


def _nipals_weight(X, Y, u, tol, max_iter):
    """Inner NIPALS loop; returns the weight, None if not converged, False if degenerate."""
    w_prev = None
    for _ in range(max_iter):
        w = X.T @ u
        norm_w = np.linalg.norm(w)
        if norm_w == 0:
            return False
        w /= norm_w
        if w_prev is not None and np.linalg.norm(w - w_prev) < tol:
            return w
        t = X @ w
        c = Y.T @ t / (t @ t)
        cc = c @ c
        if cc == 0:
            return False
        u = Y @ c / cc
        w_prev = w
    return None


def _polish(X, Y, w, accept=1e-6):
    """Snap a converged weight onto the exact fixed point of the iteration.

    The inner loop is a power iteration for the leading left singular vector
    of ``X'Y``; stopping on a small step leaves the iterate up to
    ``tol / (1 - ratio)`` away from it, which lets row order leak into the
    model.  The snapped vector depends on ``X'Y`` only.
    """
    v = np.linalg.svd(X.T @ Y, full_matrices=False)[0][:, 0]
    if v @ w < 0:
        v = -v
    return v if np.linalg.norm(v - w) < accept else w


def _y_score(X, Y, w):
    t = X @ w
    c = Y.T @ t / (t @ t)
    cc = c @ c
    return Y @ c / cc if cc > 0 else np.zeros(len(Y))


def fit_plsr(X, Y, n_comp: int, x_names=None, y_names=None, zero_variance: str = "raise",
             **kwargs) -> PlsrModel:
    """Standardise raw ``X``/``Y`` and fit; the standardisers travel with the model.

    ``zero_variance`` applies to predictors only; a constant response always raises.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    xs = fit_standardiser(X, x_names, zero_variance)
    ys = fit_standardiser(Y, y_names)
    return plsr_fit(xs.transform(X), ys.transform(Y), n_comp,
                    x_standardiser=xs, y_standardiser=ys, x_names=x_names, y_names=y_names, **kwargs)


def plsr_predict(model: PlsrModel, X_raw) -> np.ndarray:
    """Predict responses in original units."""
    X_raw = np.asarray(X_raw, dtype=float)
    if X_raw.ndim == 1:
        X_raw = X_raw[None, :]
    if X_raw.shape[1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} predictors, got {X_raw.shape[1]}")
    return model.y_standardiser.inverse_transform(predict_standardised(model, X_raw))


def predict_standardised(model: PlsrModel, X_raw) -> np.ndarray:
    return model.x_standardiser.transform(X_raw) @ model.coefficients


def explained_y_variance(model: PlsrModel) -> np.ndarray:
    """Sum of squares of each component's rank-one Y reconstruction ``t_f q_f'``."""
    T, Q = model.x_scores, model.y_loadings
    return np.array([(T[:, f] @ T[:, f]) * (Q[:, f] @ Q[:, f]) for f in range(T.shape[1])])


# persistence

_MATRICES = ("x_weights", "x_loadings", "y_loadings", "x_scores", "y_scores", "coefficients")


def model_to_dict(model: PlsrModel) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "n_features": model.n_features,
        "n_targets": model.n_targets,
        "n_samples": model.n_samples,
        "n_comp": model.n_comp,
        "x_names": list(model.x_names),
        "y_names": list(model.y_names),
        "y_total_ss": float(model.y_total_ss),
        "ssy": model.ssy.tolist(),
        "x_standardiser": {"means": model.x_standardiser.means.tolist(),
                           "stds": model.x_standardiser.stds.tolist()},
        "y_standardiser": {"means": model.y_standardiser.means.tolist(),
                           "stds": model.y_standardiser.stds.tolist()},
    }
    for name in _MATRICES:
        d[name] = getattr(model, name).tolist()
    return d


def model_from_dict(d: dict) -> PlsrModel:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported model schema version {d.get('schema_version')!r}")
    a, p, m, n = d["n_comp"], d["n_features"], d["n_targets"], d["n_samples"]
    shapes = {"x_weights": (p, a), "x_loadings": (p, a), "y_loadings": (m, a),
              "x_scores": (n, a), "y_scores": (n, a), "coefficients": (p, m)}
    mats = {}
    for name, shape in shapes.items():
        mats[name] = np.array(d[name], dtype=float).reshape(shape)

    def std(s):
        return Standardiser(np.array(s["means"], dtype=float), np.array(s["stds"], dtype=float))

    return PlsrModel(n_comp=a, ssy=np.array(d["ssy"], dtype=float), y_total_ss=float(d["y_total_ss"]),
                     x_standardiser=std(d["x_standardiser"]), y_standardiser=std(d["y_standardiser"]),
                     x_names=list(d["x_names"]), y_names=list(d["y_names"]), **mats)


def save_model(model: PlsrModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> PlsrModel:
    return model_from_dict(json.loads(Path(path).read_text()))
