"""Command-line driver: one config file, one subcommand per workflow stage.

Stages talk to each other through files under the configured output
directory::

    ingest-maps       images/            -> intensities_rings.csv, intensities_totals.csv
    ingest-pollution  pollution.csv      -> pollution_clean.csv, completeness.csv
    build-dataset     both of the above  -> dataset.csv (+ .provenance.json)
    train             dataset.csv        -> model.json, cv_report.*, test_metrics.csv
    validate          model + dataset    -> validation_*.csv, predictions.csv
    similarity        model + dataset    -> similarity.csv, vip.csv
    report            dataset (+ model)  -> correlations, hourly profiles, exceedances

Exit codes: 0 success, 1 internal error, 2 user or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import (
    component_weight_report,
    cross_correlation,
    exceedance_flags,
    hourly_profile,
    pearson_matrix,
    vip_scores,
    write_long,
)
from .errors import ConfigError, EmptyValidation, NoInputs, RingPlsError, TooFewRows
from .maps import (
    COLOURS,
    build_rings,
    count_snapshot,
    format_timestamp,
    load_image,
    parse_image_filename,
    read_intensities,
    to_intensity,
    write_intensities,
)
from .pls import PlsrModel, load_model, save_model
from .pollution import (
    AlignedDataset,
    align,
    completeness_report,
    filter_calendar,
    filter_complete,
    parse_pollution_csv,
    write_pollution_csv,
)
from .workflow import similarity_ranking, train_scenario, validate_scenario

log = logging.getLogger("ringpls")

RINGS_CSV = "intensities_rings.csv"
TOTALS_CSV = "intensities_totals.csv"
CLEAN_POLLUTION_CSV = "pollution_clean.csv"
MODEL_JSON = "model.json"


# small output helpers; every writer is deterministic (sorted keys, repr floats)

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if v is None:
        return ""
    return v


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_cell(v) for v in row])
    log.info("wrote %s", path)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n")
    log.info("wrote %s", path)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(cfg: RunConfig) -> AlignedDataset:
    path = cfg.dataset_path
    if not path.exists():
        raise ConfigError(f"dataset not found: {path} (run build-dataset first)")
    return AlignedDataset.from_csv(path)


def _load_model(cfg: RunConfig, path) -> PlsrModel:
    path = Path(path) if path else cfg.out_dir / MODEL_JSON
    if not path.exists():
        raise ConfigError(f"model file not found: {path}")
    try:
        return load_model(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{path}: not a valid model file ({exc})") from None


def _validation_station(cfg: RunConfig) -> str:
    if cfg.validation_station is None:
        raise ConfigError("no validation station configured (use --validation-station)")
    return cfg.validation_station


# subcommands

def cmd_ingest_maps(cfg: RunConfig, args) -> int:
    img_dir = cfg.require(cfg.data.images, "images")
    files = sorted(p for p in img_dir.iterdir() if p.is_file() and not p.name.startswith("."))
    if not files:
        raise NoInputs(f"no files in image directory {img_dir}")
    palette = cfg.palette.build()
    geometries = {}
    vectors, failures = [], []
    for path in files:
        try:
            station, ts = parse_image_filename(path)
            st = cfg.station(station)
            image = load_image(path)
            dims = (image.shape[1], image.shape[0])
            key = (station, dims)
            if key not in geometries:
                geometries[key] = build_rings(st.centre_px, st.radius_px, cfg.n_rings, dims)
            counts = count_snapshot(image, geometries[key], palette, station, ts)
            vectors.append(to_intensity(counts))
        except (RingPlsError, OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            failures.append((path.name, type(exc).__name__, str(exc)))
    summary = {"files": len(files), "processed": len(vectors), "failed": len(failures)}
    out = _out_dir(cfg)
    _write_json(out / "ingest_maps_summary.json",
                {**summary, "failures": [{"file": f, "error": e, "detail": d} for f, e, d in failures]})
    if not vectors:
        raise NoInputs(f"none of the {len(files)} files in {img_dir} could be processed")
    write_intensities(vectors, out / RINGS_CSV, out / TOTALS_CSV)
    print(f"processed {summary['processed']} of {summary['files']} images, {summary['failed']} failed")
    return 0


def cmd_ingest_pollution(cfg: RunConfig, args) -> int:
    path = cfg.require(cfg.data.pollution, "pollution")
    records = parse_pollution_csv(path, cfg.null_sentinels)
    out = _out_dir(cfg)
    write_pollution_csv(records, out / CLEAN_POLLUTION_CSV)
    complete = filter_complete(records)
    if cfg.period is not None:
        stations = [s.id for s in cfg.stations] or None
        report = completeness_report(records, cfg.period, stations)
        _write_csv(out / "completeness.csv", ["station_id", "complete_fraction"], sorted(report.items()))
    print(f"{len(records)} records, {len(complete)} complete")
    return 0


def cmd_build_dataset(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    rings_path = out / RINGS_CSV
    if not rings_path.exists():
        raise ConfigError(f"{rings_path} not found (run ingest-maps first)")
    pollution_path = cfg.require(cfg.data.pollution, "pollution")
    intensities = read_intensities(rings_path)
    records = parse_pollution_csv(pollution_path, cfg.null_sentinels)

    stages = [("pollution_rows", len(records))]
    if cfg.period is not None:
        first, last = cfg.period
        records = [r for r in records if first <= r.timestamp.date() <= last]
        intensities = [v for v in intensities if first <= v.timestamp.date() <= last]
        stages.append(("in_period", len(records)))
    records = filter_complete(records)
    stages.append(("complete_sets", len(records)))
    policy = cfg.calendar_policy()
    records = filter_calendar(records, policy)
    stages.append(("core_hours", len(records)))
    stations = [s.id for s in cfg.stations] or None
    dataset = align(intensities, records, stations, cfg.n_rings)
    stages.append(("aligned", len(dataset)))

    sources = {"intensities": {"file": rings_path.name, "sha256": _sha256(rings_path)},
               "pollution": {"file": pollution_path.name, "sha256": _sha256(pollution_path)}}
    if cfg.data.holidays is not None:
        hp = cfg.path(cfg.data.holidays)
        sources["holidays"] = {"file": hp.name, "sha256": _sha256(hp)}
    path = cfg.dataset_path
    path.parent.mkdir(parents=True, exist_ok=True)
    digest = dataset.to_csv(path)
    provenance = {
        "stages": dict(stages),
        "stage_order": [name for name, _ in stages],
        "alignment": dataset.provenance,
        "sources": sources,
        "traffic_snapshots": len(intensities),
        "calendar": {"weekdays": sorted(policy.included_weekdays), "hours": list(policy.hour_window),
                     "holidays": sorted(d.isoformat() for d in policy.holidays)},
        "dataset_sha256": digest,
        "version": __version__,
    }
    _write_json(Path(str(path) + ".provenance.json"), provenance)
    print(" -> ".join(f"{n}={c}" for n, c in stages))
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    dataset = _load_dataset(cfg)
    stations = cfg.training_stations or [s for s in dataset.stations if s != cfg.validation_station]
    missing = sorted(set(stations) - set(dataset.stations))
    if missing:
        raise TooFewRows(f"training stations without rows in the dataset: {missing}")
    spec = cfg.split_spec()
    result = train_scenario(dataset, stations, spec, cfg.cv.k, cfg.cv.candidates,
                            cfg.cv.paper_faithful_standardisation)
    out = _out_dir(cfg)
    save_model(result.model, out / MODEL_JSON)
    cv = result.cv
    _write_csv(out / "cv_report.csv", cv.header(), cv.to_rows())
    (out / "cv_report.txt").write_text(cv.to_text())
    ev = result.test_evaluation
    _write_csv(out / "test_metrics.csv", ev.header(), ev.to_rows())
    _write_json(out / "train_summary.json", {
        "training_stations": sorted(stations),
        "seed": spec.seed,
        "split": {"strategy": spec.strategy, "train_fraction": spec.train_fraction,
                  "train_rows": len(result.train), "test_rows": len(result.test)},
        "cv": {"k": cv.k, "candidates": cv.candidates, "infeasible": cv.infeasible,
               "paper_faithful_standardisation": cfg.cv.paper_faithful_standardisation},
        "selected_n_comp": cv.selected_n_comp,
        "cv_rmse": cv.selected_rmse,
        "test_rmse_standardised": ev.overall_rmse_standardised,
        "train_rmse_standardised": ev.train_rmse_standardised,
        "overtraining_ratio": ev.overtraining_ratio,
    })
    print(f"selected {cv.selected_n_comp} components (CV RMSE {cv.selected_rmse:.4f}); "
          f"test RMSE {ev.overall_rmse_standardised:.4f} standardised")
    return 0


def cmd_validate(cfg: RunConfig, args) -> int:
    model = _load_model(cfg, args.model)
    dataset = _load_dataset(cfg)
    station = _validation_station(cfg)
    validation = dataset.select_stations([station])
    if len(validation) == 0:
        raise EmptyValidation(f"no rows for validation station {station}")
    reference = dataset.select_stations(cfg.training_stations) if cfg.training_stations else \
        dataset.select_stations([s for s in dataset.stations if s != station])
    result = validate_scenario(model, reference, validation, cfg.range_overlap_threshold)
    out = _out_dir(cfg)
    _write_csv(out / "validation_ranges.csv",
               ["variable", "reference_min", "reference_max", "validation_min", "validation_max",
                "overlap", "flagged"],
               [[r.variable, r.reference_min, r.reference_max, r.validation_min, r.validation_max,
                 r.overlap, r.flagged] for r in result.ranges])
    ev = result.evaluation
    _write_csv(out / "validation_metrics.csv", ev.header(), ev.to_rows())
    _write_csv(out / "validation_residuals.csv", ["pollutant", "bias", "std", "skew", "normal", "band"],
               [[r.name, r.bias, r.std, r.skew, r.normal, r.band] for r in result.residuals])
    rows = []
    for i, ts in enumerate(validation.timestamps):
        for j, name in enumerate(validation.y_names):
            rows.append([station, format_timestamp(ts), name, result.truth[i, j], result.predictions[i, j]])
    _write_csv(out / "predictions.csv", ["station_id", "timestamp", "pollutant", "observed", "predicted"], rows)
    flagged = [r.variable for r in result.ranges if r.flagged]
    if flagged:
        log.warning("%d variables of %s fall outside the training range: %s",
                    len(flagged), station, ", ".join(flagged))
    print(f"{station}: RMSE {ev.overall_rmse_standardised:.4f} standardised, "
          f"{result.normalised_rmse:.4f} in truth-sd units")
    return 0


def cmd_similarity(cfg: RunConfig, args) -> int:
    model = _load_model(cfg, args.model)
    dataset = _load_dataset(cfg)
    station = _validation_station(cfg)
    sim = cfg.similarity
    candidates = sim.candidates or [s for s in dataset.stations if s != station]
    ranking = similarity_ranking(model, dataset, station, candidates, sim.bins, sim.standardised,
                                 sim.ssy_total)
    out = _out_dir(cfg)
    _write_csv(out / "similarity.csv", ["rank", "validation_station", "station", "chi2_weighted",
                                        "degenerate_variables"],
               [[i + 1, s.station_u, s.station_v, s.chi2_weighted, len(s.degenerate)]
                for i, s in enumerate(ranking)])
    _write_vip(out / "vip.csv", model, sim.ssy_total)
    for i, s in enumerate(ranking):
        print(f"{i + 1:>3}  {s.station_v:<10} {s.chi2_weighted:.6f}")
    return 0


def _write_vip(path: Path, model: PlsrModel, ssy_total: str) -> None:
    vip = vip_scores(model, ssy_total)
    _write_csv(path, ["variable", "vip", "important"],
               [[n, v, v > 1.0] for n, v in zip(vip.names, vip.scores)])


def cmd_report(cfg: RunConfig, args) -> int:
    dataset = _load_dataset(cfg)
    out = _out_dir(cfg)
    if len(dataset) < 3:
        raise TooFewRows("need at least 3 dataset rows for correlations")

    # colour totals (mean over rings) against pollutants
    n_rings = dataset.X.shape[1] // 4
    totals = dataset.X.reshape(len(dataset), 4, n_rings).mean(axis=2)
    total_names = [f"I_{c.label}" for c in COLOURS]
    labels = total_names + list(dataset.y_names)
    r = pearson_matrix(np.hstack([totals, dataset.Y]), labels)
    write_long(out / "correlation_totals.csv",
               [(a, b, r[i, j]) for i, a in enumerate(labels) for j, b in enumerate(labels)])

    # per-ring predictors against pollutants; constant predictors get no value
    varying = dataset.X.std(axis=0) > 0
    rr = np.full((dataset.Y.shape[1], dataset.X.shape[1]), np.nan)
    if varying.any():
        rr[:, varying] = cross_correlation(dataset.X[:, varying], dataset.Y)
    write_long(out / "correlation_rings.csv",
               [(y, x, rr[i, j]) for i, y in enumerate(dataset.y_names)
                for j, x in enumerate(dataset.x_names)])

    rows = []
    for station in dataset.stations:
        part = dataset.select_stations([station])
        part_totals = part.X.reshape(len(part), 4, n_rings).mean(axis=2)
        columns = [(n, part_totals[:, c]) for c, n in enumerate(total_names)]
        columns += [(n, part.Y[:, j]) for j, n in enumerate(part.y_names)]
        for name, values in columns:
            prof = hourly_profile(part.timestamps, values)
            for hour in range(24):
                if prof.present(hour):
                    rows.append([station, name, hour, prof.means[hour], prof.counts[hour]])
    _write_csv(out / "hourly_profiles.csv", ["station_id", "variable", "hour", "mean", "count"], rows)

    model_path = Path(args.model) if args.model else out / MODEL_JSON
    if model_path.exists():
        model = _load_model(cfg, model_path)
        _write_vip(out / "vip.csv", model, cfg.similarity.ssy_total)
        weight_rows = []
        for comp in range(1, model.n_comp + 1):
            cw = component_weight_report(model, comp)
            weight_rows += [(n, f"x_weight_c{comp}", w) for n, w in zip(cw.x_names, cw.x_weights)]
            weight_rows += [(n, f"y_loading_c{comp}", q) for n, q in zip(cw.y_names, cw.y_loadings)]
        write_long(out / "component_weights.csv", weight_rows)
    else:
        log.info("no model at %s; skipping VIP and component weights", model_path)

    if cfg.data.pollution is not None:
        records = parse_pollution_csv(cfg.require(cfg.data.pollution, "pollution"), cfg.null_sentinels)
        records = sorted(records, key=lambda r: (r.station_id, r.timestamp))
        flags = exceedance_flags(records, cfg.threshold_policy())
        names = list(cfg.threshold_policy().by_pollutant())
        _write_csv(out / "exceedances.csv", ["station_id", "timestamp", *names],
                   [[r.station_id, format_timestamp(r.timestamp), *(f[n] for n in names)]
                    for r, f in zip(records, flags) if any(f.values())])
        _write_json(out / "exceedance_summary.json",
                    {n: sum(f[n] for f in flags) for n in names} | {"records": len(records)})
    print(f"report written to {out}")
    return 0


def cmd_synth(cfg, args) -> int:
    from .synth import write_fixture

    out = Path(args.out or "synthetic")
    path = write_fixture(out, n_stations=args.n_stations, days=args.days,
                         seed=args.seed if args.seed is not None else 0)
    print(path)
    return 0


COMMANDS = {
    "ingest-maps": (cmd_ingest_maps, "classify map images and write ring intensities"),
    "ingest-pollution": (cmd_ingest_pollution, "parse the pollution CSV and report completeness"),
    "build-dataset": (cmd_build_dataset, "filter and align traffic with pollution"),
    "train": (cmd_train, "split, cross-validate, select and fit the model"),
    "validate": (cmd_validate, "evaluate a model on the validation station"),
    "similarity": (cmd_similarity, "rank stations by VIP-weighted chi-square similarity"),
    "report": (cmd_report, "write correlations, hourly profiles, VIP and exceedances"),
    "synth": (cmd_synth, "write a synthetic multi-station fixture"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (YAML or JSON)")
    common.add_argument("--seed", type=int, help="split and fold seed")
    common.add_argument("--stations", help="comma-separated training stations")
    common.add_argument("--validation-station")
    common.add_argument("--split", choices=["random", "chronological"])
    common.add_argument("--paper-faithful-standardisation", action="store_true",
                        help="score CV folds in units of one standardiser fitted on the whole training set")
    common.add_argument("--chi2-standardised", action="store_true",
                        help="z-score each station's sample before the chi-square comparison")
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", help="model file (default <out>/model.json)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="ringpls", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=text, description=text)
        if name == "synth":
            p.add_argument("--n-stations", type=int, default=5)
            p.add_argument("--days", type=int, default=14)
    return parser


def _config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config is required")
    stations = None
    if args.stations:
        stations = [s.strip() for s in args.stations.split(",") if s.strip()]
    return load_config(args.config, seed=args.seed, stations=stations,
                       validation_station=args.validation_station, split=args.split,
                       paper_faithful_standardisation=args.paper_faithful_standardisation,
                       chi2_standardised=args.chi2_standardised, out=args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * args.verbose
    logging.basicConfig(level=max(level, logging.DEBUG), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    func = COMMANDS[args.command][0]
    try:
        cfg = None if args.command == "synth" else _config(args)
        return func(cfg, args)
    except RingPlsError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
