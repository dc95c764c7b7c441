import csv
import json
from datetime import datetime, timedelta

import numpy as np
import pytest
import yaml
from PIL import Image

from ringpls.cli import main
from ringpls.maps import DEFAULT_REFERENCE_RGB, image_filename, intensity_from_fractions, predictor_names, write_intensities
from ringpls.pls import load_model, plsr_predict
from ringpls.pollution import HEADER, POLLUTANTS, AlignedDataset
from ringpls.selection import evaluate
from ringpls.synth import latent_linear_system, write_fixture
from ringpls.workflow import validate_scenario

FULL = ["50", "20", "30", "3", "40", "0.7", "22", "12", "34"]


def write_config(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ingest-maps

def map_config(tmp_path):
    (tmp_path / "images").mkdir()
    return write_config(tmp_path / "c.yaml", {
        "data": {"images": "images", "out": "out"}, "n_rings": 3,
        "stations": [{"id": "A", "radius_px": 9.0}]})


def test_ingest_maps_empty_directory(tmp_path):
    assert main(["ingest-maps", "--config", map_config(tmp_path)]) == 2


def test_ingest_maps_one_image_and_corrupt_files(tmp_path):
    cfg = map_config(tmp_path)
    img = np.zeros((21, 21, 3), dtype=np.uint8)
    img[:] = DEFAULT_REFERENCE_RGB[0]
    Image.fromarray(img).save(tmp_path / "images" / image_filename("A", datetime(2021, 3, 1, 9)))
    assert main(["ingest-maps", "--config", cfg]) == 0
    rows = read_csv(tmp_path / "out" / "intensities_totals.csv")
    assert len(rows) == 1 and float(rows[0]["I_green"]) == 1.0
    (tmp_path / "images" / image_filename("A", datetime(2021, 3, 1, 10))).write_bytes(b"not a png")
    (tmp_path / "images" / "badname.png").write_bytes(b"")
    (tmp_path / "images" / image_filename("ZZ", datetime(2021, 3, 1, 9))).write_bytes(b"")
    assert main(["ingest-maps", "--config", cfg]) == 0
    summary = json.loads((tmp_path / "out" / "ingest_maps_summary.json").read_text())
    assert (summary["files"], summary["processed"], summary["failed"]) == (4, 1, 3)
    assert len(read_csv(tmp_path / "out" / "intensities_totals.csv")) == 1


def test_ingest_maps_all_corrupt(tmp_path):
    cfg = map_config(tmp_path)
    (tmp_path / "images" / image_filename("A", datetime(2021, 3, 1, 10))).write_bytes(b"junk")
    assert main(["ingest-maps", "--config", cfg]) == 2


# build-dataset on a hand-counted fixture

POLLUTION_ROWS = [
    ("A", "2021-03-01T06:00", FULL),  # before 07:00
    ("A", "2021-03-01T07:00", FULL),  # kept
    ("A", "2021-03-01T08:00", FULL[:4] + [""] + FULL[5:]),  # incomplete
    ("A", "2021-03-01T22:00", FULL),  # kept
    ("A", "2021-03-01T23:00", FULL),  # after 22:00
    ("A", "2021-03-06T10:00", FULL),  # Saturday
    ("A", "2021-03-03T10:00", FULL),  # holiday
    ("A", "2021-03-02T09:00", FULL),  # no traffic snapshot
    ("B", "2021-03-01T07:00", FULL),  # kept
    ("B", "2021-03-02T12:00", ["-99"] + FULL[1:]),  # incomplete
    ("C", "2021-03-01T07:00", FULL),  # station not configured
]
TRAFFIC_KEYS = [("A", "2021-03-01T07:00"), ("A", "2021-03-01T22:00"), ("A", "2021-03-02T10:00"),
                ("B", "2021-03-01T07:00"), ("C", "2021-03-01T07:00")]


def dataset_fixture(tmp_path, pollution_rows=POLLUTION_ROWS, traffic_keys=TRAFFIC_KEYS):
    with open(tmp_path / "pollution.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for sid, ts, vals in pollution_rows:
            w.writerow([sid, ts, *vals])
    (tmp_path / "holidays.txt").write_text("2021-03-03\n")
    out = tmp_path / "out"
    out.mkdir()
    rng = np.random.default_rng(0)
    vectors = [intensity_from_fractions(s, datetime.fromisoformat(t), rng.random((15, 4)) / 4)
               for s, t in traffic_keys]
    write_intensities(vectors, out / "intensities_rings.csv", out / "intensities_totals.csv")
    return write_config(tmp_path / "c.yaml", {
        "data": {"pollution": "pollution.csv", "holidays": "holidays.txt", "out": "out"},
        "stations": [{"id": "A", "radius_px": 10}, {"id": "B", "radius_px": 10}]})


def test_build_dataset_stage_counts(tmp_path):
    cfg = dataset_fixture(tmp_path)
    assert main(["build-dataset", "--config", cfg]) == 0
    prov = json.loads((tmp_path / "out" / "dataset.csv.provenance.json").read_text())
    assert prov["stages"] == {"pollution_rows": 11, "complete_sets": 9, "core_hours": 5, "aligned": 3}
    assert prov["stage_order"] == ["pollution_rows", "complete_sets", "core_hours", "aligned"]
    ds = AlignedDataset.from_csv(tmp_path / "out" / "dataset.csv")
    assert list(zip(ds.station_ids, ds.timestamps)) == [
        ("A", datetime(2021, 3, 1, 7)), ("A", datetime(2021, 3, 1, 22)), ("B", datetime(2021, 3, 1, 7))]


def test_build_dataset_is_byte_identical_on_rerun(tmp_path):
    cfg = dataset_fixture(tmp_path)
    assert main(["build-dataset", "--config", cfg]) == 0
    first = [(tmp_path / "out" / f).read_bytes() for f in ("dataset.csv", "dataset.csv.provenance.json")]
    assert main(["build-dataset", "--config", cfg]) == 0
    assert first == [(tmp_path / "out" / f).read_bytes() for f in ("dataset.csv", "dataset.csv.provenance.json")]


def test_build_dataset_disjoint_stations(tmp_path):
    cfg = dataset_fixture(tmp_path, traffic_keys=[("C", "2021-03-01T07:00")])
    assert main(["build-dataset", "--config", cfg]) == 2


# train on hand-made datasets

def dataset_config(tmp_path, X, Y, cv=None):
    n = len(X)
    hours = [datetime(2021, 1, 1) + timedelta(hours=i) for i in range(n)]
    ds = AlignedDataset(["S"] * n, hours, X, Y, predictor_names(), list(POLLUTANTS))
    ds.to_csv(tmp_path / "dataset.csv")
    cfg = {"data": {"dataset": "dataset.csv", "out": "out"}, "training_stations": ["S"]}
    if cv:
        cfg["cv"] = cv
    return write_config(tmp_path / "c.yaml", cfg)


def test_train_recovers_rank_three(tmp_path):
    X, Y, _ = latent_linear_system(150, 60, 9, 3, 0.0, seed=11)
    cfg = dataset_config(tmp_path, X, Y, {"candidates": [1, 2, 3, 4, 5, 6]})
    assert main(["train", "--config", cfg]) == 0
    summary = json.loads((tmp_path / "out" / "train_summary.json").read_text())
    assert summary["selected_n_comp"] == 3


def test_train_twenty_candidates_at_full_width(tmp_path):
    rng = np.random.default_rng(3)
    X = rng.random((200, 60))
    Y = X @ rng.normal(size=(60, 9)) + rng.normal(size=(200, 9)) + 50
    cfg = dataset_config(tmp_path, X, Y, {"candidates": list(range(1, 21))})
    assert main(["train", "--config", cfg]) == 0
    rows = read_csv(tmp_path / "out" / "cv_report.csv")
    assert [int(r["n_comp"]) for r in rows] == list(range(1, 21))
    assert all(np.isfinite(float(r["mean_rmse"])) for r in rows)
    assert load_model(tmp_path / "out" / "model.json").x_weights.shape[0] == 60


def test_train_unknown_station_and_missing_model(tmp_path):
    X, Y, _ = latent_linear_system(60, 60, 9, 3, 0.1, seed=1)
    cfg = dataset_config(tmp_path, X, Y)
    assert main(["train", "--config", cfg, "--stations", "NOPE"]) == 2
    assert main(["validate", "--config", cfg, "--validation-station", "T"]) == 2
    assert main(["similarity", "--config", cfg, "--validation-station", "T"]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == 2
    assert main(["train"]) == 2


def test_validation_station_inside_training_set_is_rejected(tmp_path):
    X, Y, _ = latent_linear_system(60, 60, 9, 3, 0.1, seed=1)
    cfg = dataset_config(tmp_path, X, Y)
    assert main(["train", "--config", cfg, "--validation-station", "S"]) == 2


# full pipeline on a small synthetic fixture

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    cfg = str(write_fixture(root, n_stations=4, days=5, seed=3, size=41, n_rings=15))
    for cmd in ("ingest-maps", "ingest-pollution", "build-dataset", "train", "validate", "similarity", "report"):
        assert main([cmd, "--config", cfg]) == 0, cmd
    return root, cfg


def test_pipeline_outputs(pipeline):
    root, _ = pipeline
    out = root / "out"
    for name in ("intensities_rings.csv", "intensities_totals.csv", "pollution_clean.csv", "completeness.csv",
                 "dataset.csv", "model.json", "cv_report.csv", "cv_report.txt", "test_metrics.csv",
                 "validation_ranges.csv", "validation_metrics.csv", "validation_residuals.csv",
                 "predictions.csv", "similarity.csv", "vip.csv", "correlation_totals.csv",
                 "correlation_rings.csv", "hourly_profiles.csv", "component_weights.csv",
                 "exceedances.csv", "exceedance_summary.json"):
        assert (out / name).exists(), name
    sim = read_csv(out / "similarity.csv")
    assert [r["station"] for r in sim] and all(r["validation_station"] == "S04" for r in sim)
    scores = [float(r["chi2_weighted"]) for r in sim]
    assert scores == sorted(scores)
    vip = [float(r["vip"]) for r in read_csv(out / "vip.csv")]
    assert sum(v * v for v in vip) == pytest.approx(60, rel=1e-9)
    preds = read_csv(out / "predictions.csv")
    assert len(preds) % 9 == 0 and {r["station_id"] for r in preds} == {"S04"}


def test_pipeline_is_idempotent(pipeline, tmp_path):
    root, cfg = pipeline
    out2 = tmp_path / "again"
    for cmd in ("ingest-maps", "ingest-pollution"):
        assert main([cmd, "--config", cfg, "--out", str(out2)]) == 0
    # dataset.csv lives in <out>, so build, train and the rest run on the copy
    for cmd in ("build-dataset", "train", "validate", "similarity", "report"):
        assert main([cmd, "--config", cfg, "--out", str(out2)]) == 0
    for f in sorted((root / "out").iterdir()):
        assert (out2 / f.name).read_bytes() == f.read_bytes(), f.name


def test_validate_on_training_rows_matches_training_metrics(pipeline):
    root, _ = pipeline
    model = load_model(root / "out" / "model.json")
    ds = AlignedDataset.from_csv(root / "out" / "dataset.csv").select_stations(["S01", "S02", "S03"])
    result = validate_scenario(model, ds, ds)
    ev = evaluate(model, ds, ds)
    assert np.array_equal(result.evaluation.rmse, ev.rmse)
    assert result.evaluation.overall_rmse_standardised == ev.train_rmse_standardised
    assert np.array_equal(result.predictions, plsr_predict(model, ds.X))


def test_two_scenarios_give_comparable_metric_files(pipeline, tmp_path):
    _, cfg = pipeline
    tables = {}
    for name, stations in (("three", "S01,S02,S03"), ("one", "S01")):
        out = tmp_path / name
        out.mkdir()
        (out / "dataset.csv").write_bytes((pipeline[0] / "out" / "dataset.csv").read_bytes())
        assert main(["train", "--config", cfg, "--out", str(out), "--stations", stations]) == 0
        assert main(["validate", "--config", cfg, "--out", str(out), "--stations", stations]) == 0
        tables[name] = read_csv(out / "validation_metrics.csv")
    assert [r["pollutant"] for r in tables["three"]] == [r["pollutant"] for r in tables["one"]] == list(POLLUTANTS)
    assert all(float(r["rmse"]) > 0 for t in tables.values() for r in t)


def test_synth_subcommand(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "s"), "--n-stations", "2", "--days", "1", "--seed", "4"]) == 0
    assert len(list((tmp_path / "s" / "images").iterdir())) == 48
    assert (tmp_path / "s" / "config.yaml").exists()
