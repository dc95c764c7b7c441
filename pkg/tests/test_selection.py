from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringpls.errors import EmptyTest, FoldTooSmall, ShapeMismatch, TooFewRows
from ringpls.pls import plsr_predict
from ringpls.pollution import AlignedDataset
from ringpls.selection import (
    SplitSpec,
    compare_ranges,
    default_candidates,
    evaluate,
    fold_assignment,
    kfold_rmse,
    n_train_rows,
    rmse,
    rmse_per_column,
    split,
    split_indices,
    train_final,
)
from ringpls.synth import latent_linear_system


def dataset(X, Y, station="S"):
    start = datetime(2021, 3, 1)
    n = len(X)
    return AlignedDataset([station] * n, [start + timedelta(hours=i) for i in range(n)], X, Y,
                          [f"x{j}" for j in range(X.shape[1])], [f"y{j}" for j in range(Y.shape[1])])


# split

def test_split_sizes():
    train, test = split_indices(10, SplitSpec())
    assert len(train) == 8 and len(test) == 2
    assert n_train_rows(25, 0.8) == 20
    assert n_train_rows(11, 0.5) == 6  # half rounds up
    with pytest.raises(TooFewRows):
        split_indices(9, SplitSpec())
    with pytest.raises(ValueError):
        SplitSpec(train_fraction=1.0)
    with pytest.raises(ValueError):
        SplitSpec(strategy="blocked")


def test_split_seeds():
    a = split_indices(1000, SplitSpec(seed=1))
    b = split_indices(1000, SplitSpec(seed=1))
    c = split_indices(1000, SplitSpec(seed=2))
    assert np.array_equal(a[0], b[0])
    member_a = np.isin(np.arange(1000), a[0])
    member_c = np.isin(np.arange(1000), c[0])
    assert not np.array_equal(member_a, member_c)


@settings(max_examples=80, deadline=None)
@given(st.integers(10, 400), st.integers(0, 2 ** 63 - 1), st.floats(0.05, 0.95),
       st.sampled_from(["random", "chronological"]))
def test_split_partitions(n, seed, fraction, strategy):
    spec = SplitSpec(fraction, seed, strategy)
    train, test = split_indices(n, spec)
    assert len(np.intersect1d(train, test)) == 0
    assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(n))
    assert len(train) == int(np.floor(fraction * n + 0.5))
    again = split_indices(n, spec)
    assert np.array_equal(train, again[0]) and np.array_equal(test, again[1])


def test_chronological_split_takes_earliest_hours():
    X = np.arange(20.0)[:, None] * [1, 2]
    ds = dataset(X, X[:, :1] + 1)
    shuffled = ds.subset(np.random.default_rng(0).permutation(20))
    train, test = split(shuffled, SplitSpec(0.8, 0, "chronological"))
    assert max(train.timestamps) < min(test.timestamps)


# rmse

def test_rmse_examples():
    y = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert rmse(y, y) == 0.0
    assert rmse([[0.0]], [[2.0]]) == 2.0
    assert rmse([[0.0], [0.0]], [[3.0], [4.0]]) == pytest.approx(np.sqrt(12.5), rel=1e-15)
    assert np.allclose(rmse_per_column([[0, 0], [0, 0]], [[3, 1], [4, 1]]), [np.sqrt(12.5), 1.0])
    with pytest.raises(ShapeMismatch):
        rmse(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        rmse(np.zeros((0, 1)), np.zeros((0, 1)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.floats(-100, 100))
def test_rmse_constant_offset(values, c):
    y = np.array(values)[:, None]
    assert rmse(y, y + c) == pytest.approx(abs(c), rel=1e-9, abs=1e-9)


# cross-validation

@settings(max_examples=40, deadline=None)
@given(st.integers(2, 300), st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_fold_assignment_partitions(n, k, seed):
    k = min(k, n)
    folds = fold_assignment(n, k, seed)
    sizes = np.bincount(folds, minlength=k)
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    assert set(folds.tolist()) == set(range(k))


def noisy_system(seed, n=150, p=10, m=3, rank=3, noise=0.5):
    X, Y, _ = latent_linear_system(n, p, m, rank, noise, seed)
    X = X + 0.05 * np.random.default_rng(seed + 99).normal(size=X.shape)
    return X, Y


def test_noise_free_knee_at_true_rank():
    X, Y, _ = latent_linear_system(120, 12, 4, 3, 0.0, seed=2)
    report = kfold_rmse(X, Y, 5, list(range(1, 7)), seed=0)
    assert report.selected_n_comp == 3
    assert report.mean_rmse[2] < 1e-8
    assert report.mean_rmse[0] > report.mean_rmse[1] > report.mean_rmse[2]
    assert report.infeasible == [4, 5, 6]
    assert np.all(np.isnan(report.mean_rmse[3:]))


def test_single_candidate_and_duplicates():
    X, Y = noisy_system(1)
    assert kfold_rmse(X, Y, 5, [1]).selected_n_comp == 1
    report = kfold_rmse(X, Y, 5, [3, 3])
    assert report.mean_rmse[0] == report.mean_rmse[1]
    assert np.all(np.isfinite(report.per_fold_rmse)) and np.all(report.per_fold_rmse >= 0)
    assert report.per_pollutant_rmse.shape == (2, 3)


def test_selection_is_argmin_with_smallest_tie():
    X, Y = noisy_system(3)
    report = kfold_rmse(X, Y, 5, list(range(1, 9)))
    best = np.nanmin(report.mean_rmse)
    assert report.selected_rmse == best
    assert report.selected_n_comp == min(a for a, v in zip(report.candidates, report.mean_rmse) if v == best)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.sets(st.integers(1, 8), min_size=1, max_size=8))
def test_nested_candidates_never_worse(seed, subset):
    X, Y = noisy_system(seed, n=80, p=8)
    small = sorted(subset)
    a = kfold_rmse(X, Y, 4, small, seed=seed)
    b = kfold_rmse(X, Y, 4, list(range(1, 9)), seed=seed)
    assert b.selected_rmse <= a.selected_rmse


def test_fold_too_small():
    X, Y = noisy_system(0, n=12)
    with pytest.raises(FoldTooSmall):
        kfold_rmse(X, Y, 5, [9])
    with pytest.raises(FoldTooSmall):
        kfold_rmse(X[:3], Y[:3], 5, [1])


def test_default_candidates():
    assert default_candidates(1000, 60, 5) == list(range(1, 21))
    assert default_candidates(1000, 8, 5) == list(range(1, 9))
    assert default_candidates(12, 60, 5) == list(range(1, 9))


def test_paper_faithful_units_differ_only_in_scale():
    X, Y = noisy_system(5)
    a = kfold_rmse(X, Y, 5, [1, 2, 3, 4], seed=1)
    b = kfold_rmse(X, Y, 5, [1, 2, 3, 4], seed=1, refit_standardiser=False)
    assert np.array_equal(a.folds, b.folds)
    assert np.allclose(a.mean_rmse, b.mean_rmse, rtol=0.1)
    assert not np.array_equal(a.mean_rmse, b.mean_rmse)


def test_cv_report_outputs():
    X, Y = noisy_system(6)
    report = kfold_rmse(X, Y, 5, [1, 2, 3])
    rows = report.to_rows()
    assert report.header() == ["n_comp", "mean_rmse", "fold1_rmse", "fold2_rmse", "fold3_rmse",
                               "fold4_rmse", "fold5_rmse", "selected"]
    assert [r[0] for r in rows] == [1, 2, 3]
    assert sum(r[-1] for r in rows) == 1
    assert "<- selected" in report.to_text()


# final fit and evaluation

@pytest.mark.parametrize("seed", range(10))
def test_train_final_beats_held_out_error(seed):
    # noise-free but under-fitted (rank 6, at most 3 components): the refit on
    # all rows fits its own rows better than the folds fit their held-out rows
    X, Y, _ = latent_linear_system(100, 10, 3, 6, 0.0, seed=seed)
    ds = dataset(X, Y)
    report = kfold_rmse(ds.X, ds.Y, 5, [1, 2, 3])
    model = train_final(ds, report.selected_n_comp)
    ys = model.y_standardiser
    train_rmse = rmse(ys.transform(ds.Y), ys.transform(plsr_predict(model, ds.X)))
    assert train_rmse <= report.selected_rmse


def test_exact_system_fits_to_rounding():
    X, Y, _ = latent_linear_system(100, 10, 3, 3, 0.0, seed=4)
    ds = dataset(X, Y)
    report = kfold_rmse(ds.X, ds.Y, 5, [1, 2, 3])
    model = train_final(ds, report.selected_n_comp)
    ys = model.y_standardiser
    assert rmse(ys.transform(ds.Y), ys.transform(plsr_predict(model, ds.X))) < 1e-12
    assert report.per_fold_rmse[2].max() < 1e-12


def test_train_final_dimensions():
    rng = np.random.default_rng(0)
    X = rng.random((200, 60))
    Y = X @ rng.normal(size=(60, 9)) + rng.normal(size=(200, 9))
    model = train_final(dataset(X, Y), 7)
    assert model.x_weights.shape == (60, 7) and model.y_loadings.shape == (9, 7)


def test_evaluate_on_training_rows():
    X, Y = noisy_system(7)
    ds = dataset(X, Y)
    model = train_final(ds, 3)
    ev = evaluate(model, ds, ds)
    assert ev.overtraining_ratio == pytest.approx(1.0, rel=1e-12)
    assert len(ev.to_rows()) == 3 and len(ev.header()) == 6


def test_evaluate_perfect_model():
    X, Y, _ = latent_linear_system(60, 6, 2, 6, 0.0, seed=1)
    ds = dataset(X, Y)
    ev = evaluate(train_final(ds, 6), ds)
    assert np.allclose(ev.rmse, 0, atol=1e-9) and ev.overall_rmse_standardised < 1e-9


def test_evaluate_noise_oracle():
    noise = 0.3
    X, Y, _ = latent_linear_system(2300, 10, 3, 3, noise, seed=9)
    train, test = dataset(X[:300], Y[:300]), dataset(X[300:], Y[300:])
    ev = evaluate(train_final(train, 3), test)
    assert np.all(ev.rmse >= 0.9 * noise) and np.all(ev.rmse <= 1.3 * noise)


def test_evaluate_empty():
    X, Y = noisy_system(0)
    ds = dataset(X, Y)
    with pytest.raises(EmptyTest):
        evaluate(train_final(ds, 2), ds.subset([]))


# ranges

def test_compare_ranges():
    X, Y = noisy_system(0, n=40)
    ds = dataset(X, Y)
    assert all(r.overlap == 1.0 and not r.flagged for r in compare_ranges(ds, ds))
    inner = ds.subset(np.argsort(ds.X[:, 0])[5:-5])
    assert compare_ranges(ds, inner)[0].overlap == 1.0
    shifted = dataset(X + np.array([1000.0] + [0.0] * (X.shape[1] - 1)), Y)
    rows = compare_ranges(ds, shifted)
    assert rows[0].overlap == 0.0 and rows[0].flagged
    assert not rows[1].flagged
    assert len(rows) == X.shape[1] + Y.shape[1]
