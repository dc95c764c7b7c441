"""Synthetic data: linear test systems and a multi-station traffic/pollution fixture.

The fixture draws a few straight roads through each station's disc, cuts
them into chunks, and colours every chunk per hour from an hour-of-day
congestion curve.  Pollutants are one shared linear map of the resulting
ring fractions plus Gaussian noise, so a model trained on any subset of
stations targets the same coefficients.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from .maps import (
    COLOURS,
    DEFAULT_REFERENCE_RGB,
    build_rings,
    flatten_predictors,
    image_filename,
    intensity_from_fractions,
    predictor_names,
)
from .pollution import HEADER, POLLUTANTS, AlignedDataset

BACKGROUND_RGB = (245, 243, 240)
ROAD_NO_DATA_RGB = (200, 200, 200)
BASELINE = np.array([55.0, 25.0, 30.0, 4.0, 35.0, 0.8, 25.0, 15.0, 40.0])


def latent_linear_system(n: int, p: int, m: int, rank: int, noise_std: float = 0.0, seed: int = 0):
    """``X = Z A' + offsets`` with ``Z`` n x rank, and ``Y = X B + noise`` with ``B = A G``.

    ``X`` has exact rank ``rank`` (after centring) and the coefficient map
    ``B`` has rank ``rank``; returns ``(X, Y, B)``.
    """
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(n, rank))
    A = rng.normal(size=(p, rank))
    X = Z @ A.T + rng.uniform(0, 5, size=p)
    B = A @ rng.normal(size=(rank, m))
    Y = X @ B + noise_std * rng.normal(size=(n, m)) + 10.0
    return X, Y, B


@dataclass
class StationLayout:
    station_id: str
    chunk_raster: np.ndarray  # -1 off-road, else chunk id
    chunk_ring_counts: np.ndarray  # chunks x n_rings
    ring_pixel_counts: np.ndarray
    busyness: float


def make_layout(station_id: str, size: int, radius: float, n_rings: int, rng,
                n_roads: int = 8, chunks_per_road: int = 6) -> StationLayout:
    geometry = build_rings(None, radius, n_rings, (size, size))
    c = (size - 1) / 2
    raster = np.full((size, size), -1, dtype=np.int32)
    ys, xs = np.mgrid[0:size, 0:size]
    chunk = 0
    for _ in range(n_roads):
        angle = rng.uniform(0, np.pi)
        offset = rng.uniform(-0.9, 0.9) * radius
        width = rng.uniform(1.0, 2.5)
        nx, ny = np.cos(angle), np.sin(angle)
        # signed distance from the road centre line, and position along it
        d = (xs - c) * nx + (ys - c) * ny - offset
        s = -(xs - c) * ny + (ys - c) * nx
        on_road = np.abs(d) <= width
        edges = np.linspace(-radius, radius, chunks_per_road + 1)
        piece = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, chunks_per_road - 1)
        raster[on_road] = chunk + piece[on_road]
        chunk += chunks_per_road
    ring = geometry.ring_index
    counts = np.zeros((chunk, n_rings), dtype=np.int64)
    inside = (ring > 0) & (raster >= 0)
    np.add.at(counts, (raster[inside], ring[inside] - 1), 1)
    return StationLayout(station_id, raster, counts, np.asarray(geometry.ring_pixel_counts),
                         float(rng.uniform(0.6, 1.4)))


def congestion(hour: int, busyness: float) -> float:
    """Hour-of-day congestion level: morning and evening rush peaks."""
    return busyness * (0.3 + np.exp(-((hour - 9.5) / 1.8) ** 2) + 0.8 * np.exp(-((hour - 18) / 2.2) ** 2))


def colour_chunks(layout: StationLayout, hour: int, rng) -> np.ndarray:
    """Colour index per chunk (0..3), or -1 for a road without traffic data."""
    level = congestion(hour, layout.busyness)
    logits = np.array([1.5, 0.4 + level, -0.6 + 1.4 * level, -2.0 + 1.6 * level, -0.5])
    probs = np.exp(logits - logits.max())
    probs /= probs.sum()
    draw = rng.choice(5, size=layout.chunk_ring_counts.shape[0], p=probs)
    return np.where(draw == 4, -1, draw)


def ring_fractions(layout: StationLayout, chunk_colours: np.ndarray) -> np.ndarray:
    n_rings = layout.chunk_ring_counts.shape[1]
    counts = np.zeros((n_rings, 4))
    for colour in range(4):
        counts[:, colour] = layout.chunk_ring_counts[chunk_colours == colour].sum(axis=0)
    return counts / layout.ring_pixel_counts[:, None]


def render(layout: StationLayout, chunk_colours: np.ndarray, palette_rgb=DEFAULT_REFERENCE_RGB) -> np.ndarray:
    lut = np.array([palette_rgb[c] for c in COLOURS] + [ROAD_NO_DATA_RGB], dtype=np.uint8)
    img = np.empty(layout.chunk_raster.shape + (3,), dtype=np.uint8)
    img[:] = BACKGROUND_RGB
    road = layout.chunk_raster >= 0
    colour = chunk_colours[layout.chunk_raster[road]]
    img[road] = lut[np.where(colour < 0, 4, colour)]
    return img


def shared_coefficients(n_predictors: int, rng) -> np.ndarray:
    """Rank-3 map from ring fractions to the nine pollutants (original units)."""
    A = rng.normal(size=(n_predictors, 3))
    G = rng.normal(size=(3, len(POLLUTANTS)))
    B = A @ G
    return B / np.abs(B).max() * BASELINE * 2.0


def station_dataset(n_stations: int = 8, days: int = 10, seed: int = 0, *, size: int = 121,
                    n_rings: int = 15, noise_frac: float = 0.05, start: date = date(2021, 3, 1),
                    hours=range(7, 23)) -> AlignedDataset:
    """Aligned multi-station dataset drawn without rendering images (weekdays only)."""
    rng = np.random.default_rng(seed)
    layouts = [make_layout(f"S{i + 1:02d}", size, (size - 1) / 2 - 1, n_rings, rng)
               for i in range(n_stations)]
    B = shared_coefficients(4 * n_rings, rng)
    sids, tss, xs = [], [], []
    for layout in layouts:
        for d in range(days):
            day = start + timedelta(days=d)
            if day.weekday() >= 5:
                continue
            for h in hours:
                ts = datetime(day.year, day.month, day.day, h)
                frac = ring_fractions(layout, colour_chunks(layout, h, rng))
                sids.append(layout.station_id)
                tss.append(ts)
                xs.append(flatten_predictors(intensity_from_fractions(layout.station_id, ts, frac), n_rings))
    X = np.array(xs)
    Y = pollutant_response(X, B, noise_frac, rng)
    order = sorted(range(len(sids)), key=lambda i: (sids[i], tss[i]))
    return AlignedDataset([sids[i] for i in order], [tss[i] for i in order], X[order],
                          Y[order], predictor_names(n_rings), list(POLLUTANTS))


def pollutant_response(X, B, noise_frac, rng) -> np.ndarray:
    """Baseline plus the linear traffic effect (centred on the sample mean) plus noise."""
    Y = BASELINE + (X - X.mean(axis=0)) @ B + noise_frac * BASELINE * rng.normal(size=(len(X), len(BASELINE)))
    # guard only; the centred signal keeps values far from zero
    return np.maximum(Y, 0.0)


def write_fixture(out_dir, *, n_stations: int = 5, days: int = 14, seed: int = 0, size: int = 121,
                  n_rings: int = 15, noise_frac: float = 0.05, start: date = date(2021, 3, 1),
                  null_rate: float = 0.03, holiday_offset: int = 3) -> Path:
    """Write images, a pollution CSV, a holiday file and a config; returns the config path.

    Every station-hour of ``days`` consecutive days gets an image and a
    pollution row.  About ``null_rate`` of rows carry one missing value
    (empty or ``-99``).
    """
    out_dir = Path(out_dir)
    img_dir = out_dir / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    radius = (size - 1) / 2 - 1
    layouts = [make_layout(f"S{i + 1:02d}", size, radius, n_rings, rng) for i in range(n_stations)]
    B = shared_coefficients(4 * n_rings, rng)

    keys, xs = [], []
    for layout in layouts:
        for d in range(days):
            day = start + timedelta(days=d)
            for h in range(24):
                ts = datetime(day.year, day.month, day.day, h)
                colours = colour_chunks(layout, h, rng)
                Image.fromarray(render(layout, colours)).save(img_dir / image_filename(layout.station_id, ts))
                keys.append((layout.station_id, ts))
                xs.append(ring_fractions(layout, colours).T.ravel())
    Y = pollutant_response(np.array(xs), B, noise_frac, rng)
    rows = []
    for (sid, ts), y in zip(keys, Y):
        cells = [repr(float(v)) for v in y]
        if rng.random() < null_rate:
            cells[int(rng.integers(len(cells)))] = "" if rng.random() < 0.5 else "-99"
        rows.append([sid, ts.strftime("%Y-%m-%dT%H:00"), *cells])

    with open(out_dir / "pollution.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        w.writerows(rows)
    holiday = start + timedelta(days=holiday_offset)
    (out_dir / "holidays.txt").write_text(f"# synthetic holiday\n{holiday.isoformat()}\n")

    ids = [layout.station_id for layout in layouts]
    config = {
        "data": {"images": "images", "pollution": "pollution.csv", "holidays": "holidays.txt",
                 "out": "out"},
        "n_rings": n_rings,
        "stations": [{"id": sid, "radius_px": radius} for sid in ids],
        "period": [start.isoformat(), (start + timedelta(days=days - 1)).isoformat()],
        "split": {"train_fraction": 0.8, "seed": seed, "strategy": "random"},
        "cv": {"k": 5},
        "training_stations": ids[: max(1, min(3, len(ids) - 1))],
        "validation_station": ids[-1],
    }
    path = out_dir / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False))
    return path
