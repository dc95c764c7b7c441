"""End-to-end modelling steps on in-memory datasets.

``train_scenario`` covers split, cross-validation, selection, refit and the
test-set check; ``validate_scenario`` the range comparison and validation
metrics; ``similarity_ranking`` the VIP-weighted station comparison.  A
scenario (three stations, six stations, most-similar station) is nothing
but a different list of training stations.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import normalise_vip, rank_similarity, residual_report, vip_scores
from .errors import EmptyValidation, TooFewRows
from .pls import PlsrModel, plsr_predict
from .pollution import AlignedDataset
from .selection import CvReport, Evaluation, SplitSpec, compare_ranges, evaluate, kfold_rmse, split, train_final


@dataclass
class TrainResult:
    model: PlsrModel
    cv: CvReport
    train: AlignedDataset
    test: AlignedDataset
    test_evaluation: Evaluation


def train_scenario(dataset: AlignedDataset, stations, spec: SplitSpec, k: int = 5, candidates=None,
                   paper_faithful_standardisation: bool = False) -> TrainResult:
    data = dataset.select_stations(stations)
    if len(data) == 0:
        raise TooFewRows(f"no rows for training stations {sorted(stations)}")
    train, test = split(data, spec)
    cv = kfold_rmse(train.X, train.Y, k, candidates, seed=spec.seed,
                    refit_standardiser=not paper_faithful_standardisation, zero_variance="unit")
    model = train_final(train, cv.selected_n_comp, zero_variance="unit")
    return TrainResult(model, cv, train, test, evaluate(model, test, train))


@dataclass
class ValidationResult:
    evaluation: Evaluation
    residuals: list
    ranges: list
    predictions: np.ndarray
    truth: np.ndarray

    @property
    def normalised_rmse(self) -> float:
        """Pooled RMSE after scaling each pollutant by the truth's std dev."""
        sd = self.truth.std(axis=0, ddof=1)
        return float(np.sqrt(np.mean(((self.predictions - self.truth) / sd) ** 2)))


def validate_scenario(model: PlsrModel, reference: AlignedDataset, validation: AlignedDataset,
                      overlap_threshold: float = 0.9) -> ValidationResult:
    if len(validation) == 0:
        raise EmptyValidation("validation station has no rows")
    pred = plsr_predict(model, validation.X)
    return ValidationResult(
        evaluation=evaluate(model, validation),
        residuals=residual_report(validation.Y, pred, list(validation.y_names)),
        ranges=compare_ranges(reference, validation, overlap_threshold),
        predictions=pred,
        truth=validation.Y,
    )


def similarity_ranking(benchmark: PlsrModel, dataset: AlignedDataset, validation_station: str,
                       candidates, bins: int = 20, standardised: bool = False,
                       ssy_total: str = "explained") -> list:
    omega = normalise_vip(vip_scores(benchmark, ssy_total).scores)
    val = dataset.select_stations([validation_station])
    if len(val) == 0:
        raise EmptyValidation(f"no rows for validation station {validation_station}")
    pool = {sid: dataset.select_stations([sid]).X for sid in candidates if sid != validation_station}
    pool = {sid: x for sid, x in pool.items() if len(x)}
    return rank_similarity(validation_station, val.X, pool, omega, bins,
                           standardised=standardised, names=list(dataset.x_names))
