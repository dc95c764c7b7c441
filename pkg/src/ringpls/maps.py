"""Traffic map images to ring-based traffic intensities.

A station's surroundings are a disc of radius ``R`` pixels centred on the
sensor, split into ``N`` concentric equal-area rings.  Each pixel is
classified into one of four traffic colours (or non-road) and per-ring
colour fractions are averaged into one intensity per colour.
"""
from __future__ import annotations

import csv
import enum
import math
import re
from dataclasses import dataclass, field
from datetime import datetime
from itertools import combinations
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatch,
    DiscOutOfBounds,
    EmptyRing,
    FilenameError,
    PaletteError,
    SchemaError,
    WrongRingCount,
)

DEFAULT_N_RINGS = 15
NON_ROAD = -1


class TrafficColour(enum.IntEnum):
    GREEN = 0
    ORANGE = 1
    RED = 2
    DARK_RED = 3

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "")


COLOURS = tuple(TrafficColour)

# Approximate Google Maps traffic-layer colours.
DEFAULT_REFERENCE_RGB = {
    TrafficColour.GREEN: (99, 214, 104),
    TrafficColour.ORANGE: (255, 151, 77),
    TrafficColour.RED: (242, 60, 50),
    TrafficColour.DARK_RED: (129, 31, 31),
}
DEFAULT_TOLERANCE = 40.0


@dataclass(frozen=True)
class ColourPalette:
    """Reference RGB per traffic colour plus a Euclidean match tolerance."""

    reference_rgb: dict
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        ref = {}
        for colour in COLOURS:
            if colour not in self.reference_rgb:
                raise PaletteError(f"palette is missing {colour.name}")
            rgb = tuple(int(v) for v in self.reference_rgb[colour])
            if len(rgb) != 3 or any(v < 0 or v > 255 for v in rgb):
                raise PaletteError(f"{colour.name}: not an 8-bit RGB triple: {rgb}")
            ref[colour] = rgb
        if not self.tolerance >= 0:
            raise PaletteError("tolerance must be non-negative")
        for a, b in combinations(COLOURS, 2):
            if math.dist(ref[a], ref[b]) <= 2 * self.tolerance:
                raise PaletteError(
                    f"{a.name} and {b.name} are closer than 2 x tolerance ({self.tolerance})"
                )
        object.__setattr__(self, "reference_rgb", ref)

    @classmethod
    def default(cls) -> "ColourPalette":
        return cls(dict(DEFAULT_REFERENCE_RGB), DEFAULT_TOLERANCE)

    def reference_array(self) -> np.ndarray:
        return np.array([self.reference_rgb[c] for c in COLOURS], dtype=np.int32)


def classify_pixel(rgb, palette: ColourPalette) -> TrafficColour | None:
    """Return the matching traffic colour, or ``None`` for a non-road pixel."""
    for colour in COLOURS:
        if math.dist(tuple(int(v) for v in rgb), palette.reference_rgb[colour]) <= palette.tolerance:
            return colour
    return None


def classify_image(image: np.ndarray, palette: ColourPalette) -> np.ndarray:
    """Vectorised :func:`classify_pixel`; returns int8 labels, ``NON_ROAD`` = -1."""
    rgb = np.asarray(image)[..., :3].astype(np.int32)
    labels = np.full(rgb.shape[:-1], NON_ROAD, dtype=np.int8)
    tol2 = palette.tolerance ** 2
    for colour, ref in zip(COLOURS, palette.reference_array()):
        d2 = ((rgb - ref) ** 2).sum(axis=-1)
        labels[d2 <= tol2] = int(colour)
    return labels


@dataclass(frozen=True, eq=False)
class RingGeometry:
    """Equal-area rings around ``centre_px``; ``ring_index`` holds 1..N or 0 (outside)."""

    centre_px: tuple
    outer_radius_px: float
    n_rings: int
    image_dims: tuple
    ring_pixel_counts: tuple
    ring_index: np.ndarray = field(repr=False)

    def boundaries(self) -> np.ndarray:
        i = np.arange(1, self.n_rings + 1)
        return self.outer_radius_px * np.sqrt(i / self.n_rings)

    @property
    def key(self) -> tuple:
        return (tuple(self.centre_px), float(self.outer_radius_px), self.n_rings, tuple(self.image_dims))


def ring_of(distance: float, outer_radius_px: float, n_rings: int) -> int:
    """Ring membership (1-based) of a point at ``distance``; 0 outside the disc."""
    d2 = distance * distance
    r2 = outer_radius_px * outer_radius_px
    if d2 >= r2:
        return 0
    return min(max(math.ceil(n_rings * d2 / r2), 1), n_rings)


def build_rings(centre_px, outer_radius_px: float, n_rings: int, image_dims) -> RingGeometry:
    """Build equal-area rings; pixel (col, row) sits at coordinates (col, row).

    ``image_dims`` is ``(width, height)``.  ``centre_px=None`` puts the
    sensor at the geometric centre of the frame.
    """
    w, h = (int(v) for v in image_dims)
    if n_rings < 1:
        raise ValueError("n_rings must be >= 1")
    if not outer_radius_px > 0:
        raise ValueError("outer_radius_px must be positive")
    if centre_px is None:
        centre_px = ((w - 1) / 2, (h - 1) / 2)
    cx, cy = (float(v) for v in centre_px)
    if cx - outer_radius_px < -0.5 or cy - outer_radius_px < -0.5 or \
            cx + outer_radius_px > w - 0.5 or cy + outer_radius_px > h - 0.5:
        raise DiscOutOfBounds(
            f"disc of radius {outer_radius_px} at ({cx}, {cy}) does not fit in a {w}x{h} frame"
        )

    ys, xs = np.mgrid[0:h, 0:w]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    r2 = float(outer_radius_px) ** 2
    ring = np.ceil(n_rings * d2 / r2)
    ring = np.clip(ring, 1, n_rings).astype(np.int16)
    ring[d2 >= r2] = 0
    counts = np.bincount(ring.ravel(), minlength=n_rings + 1)[1:]
    ring.setflags(write=False)
    return RingGeometry(
        centre_px=(cx, cy),
        outer_radius_px=float(outer_radius_px),
        n_rings=int(n_rings),
        image_dims=(w, h),
        ring_pixel_counts=tuple(int(c) for c in counts),
        ring_index=ring,
    )


@dataclass(frozen=True, eq=False)
class SnapshotCounts:
    station_id: str
    timestamp: datetime
    counts: np.ndarray  # n_rings x 4
    geometry: RingGeometry

    @property
    def nonroad(self) -> np.ndarray:
        return np.asarray(self.geometry.ring_pixel_counts) - self.counts.sum(axis=1)


@dataclass(frozen=True, eq=False)
class IntensityVector:
    station_id: str
    timestamp: datetime
    ring_fractions: np.ndarray  # n_rings x 4
    totals: np.ndarray  # 4

    @property
    def n_rings(self) -> int:
        return self.ring_fractions.shape[0]


def count_snapshot(image, geometry: RingGeometry, palette: ColourPalette,
                   station_id: str, timestamp: datetime) -> SnapshotCounts:
    image = np.asarray(image)
    w, h = geometry.image_dims
    if image.ndim != 3 or image.shape[:2] != (h, w):
        raise DimensionMismatch(
            f"image is {image.shape[1::-1] if image.ndim >= 2 else image.shape}, geometry expects {w}x{h}"
        )
    labels = classify_image(image, palette)
    ring = geometry.ring_index
    hit = (ring > 0) & (labels >= 0)
    flat = (ring[hit].astype(np.int64) - 1) * 4 + labels[hit]
    counts = np.bincount(flat, minlength=geometry.n_rings * 4).reshape(geometry.n_rings, 4)
    return SnapshotCounts(station_id, timestamp, counts, geometry)


def to_intensity(counts: SnapshotCounts) -> IntensityVector:
    t = np.asarray(counts.geometry.ring_pixel_counts, dtype=float)
    if np.any(t == 0):
        raise EmptyRing(f"rings {list(np.flatnonzero(t == 0) + 1)} contain no pixels")
    fractions = counts.counts / t[:, None]
    return intensity_from_fractions(counts.station_id, counts.timestamp, fractions)


def intensity_from_fractions(station_id, timestamp, fractions) -> IntensityVector:
    fractions = np.asarray(fractions, dtype=float)
    totals = fractions.sum(axis=0) / fractions.shape[0]
    return IntensityVector(station_id, timestamp, fractions, totals)


def flatten_predictors(v: IntensityVector, n_rings: int = DEFAULT_N_RINGS) -> np.ndarray:
    """Colour-major, ring-minor predictor vector (60 values for 15 rings)."""
    if v.n_rings != n_rings:
        raise WrongRingCount(f"expected {n_rings} rings, got {v.n_rings}")
    return v.ring_fractions.T.ravel().copy()


def unflatten_predictors(x, n_rings: int = DEFAULT_N_RINGS) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (4 * n_rings,):
        raise WrongRingCount(f"expected {4 * n_rings} predictors, got {x.shape}")
    return x.reshape(4, n_rings).T.copy()


def predictor_names(n_rings: int = DEFAULT_N_RINGS) -> list[str]:
    return [f"{c.label}_r{i:02d}" for c in COLOURS for i in range(1, n_rings + 1)]


_FILENAME_RE = re.compile(r"^(?P<station>.+)_(?P<ts>\d{4}-\d{2}-\d{2}T\d{2})$")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def parse_image_filename(path) -> tuple[str, datetime]:
    path = Path(path)
    if path.suffix.lower() not in IMAGE_SUFFIXES:
        raise FilenameError(f"{path.name}: not a PNG/JPEG file")
    m = _FILENAME_RE.match(path.stem)
    if not m:
        raise FilenameError(f"{path.name}: expected <station_id>_<YYYY-MM-DDTHH>{path.suffix}")
    try:
        ts = datetime.strptime(m["ts"], "%Y-%m-%dT%H")
    except ValueError as exc:
        raise FilenameError(f"{path.name}: {exc}") from None
    return m["station"], ts


def image_filename(station_id: str, timestamp: datetime, suffix: str = ".png") -> str:
    return f"{station_id}_{timestamp:%Y-%m-%dT%H}{suffix}"


def load_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_intensities(vectors, fractions_path, totals_path) -> None:
    """Write the long per-ring table and the companion totals table."""
    vectors = sorted(vectors, key=lambda v: (v.station_id, v.timestamp))
    with open(fractions_path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["station_id", "timestamp", "colour", "ring", "fraction"])
        for v in vectors:
            ts = format_timestamp(v.timestamp)
            for c in COLOURS:
                for i in range(v.n_rings):
                    out.writerow([v.station_id, ts, c.label, i + 1, _fmt(v.ring_fractions[i, c])])
    with open(totals_path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["station_id", "timestamp", "I_green", "I_orange", "I_red", "I_darkred"])
        for v in vectors:
            out.writerow([v.station_id, format_timestamp(v.timestamp), *(_fmt(t) for t in v.totals)])


def read_intensities(fractions_path) -> list[IntensityVector]:
    cells: dict = {}
    colour_of = {c.label: c for c in COLOURS}
    with open(fractions_path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["station_id", "timestamp", "colour", "ring", "fraction"]
        if reader.fieldnames != expected:
            raise SchemaError(f"{fractions_path}: expected header {','.join(expected)}")
        for row in reader:
            key = (row["station_id"], parse_timestamp(row["timestamp"]))
            cells.setdefault(key, {})[(int(row["ring"]), colour_of[row["colour"]])] = float(row["fraction"])
    vectors = []
    for (station, ts), values in sorted(cells.items()):
        n = max(r for r, _ in values)
        fractions = np.zeros((n, 4))
        for (r, c), f in values.items():
            fractions[r - 1, c] = f
        vectors.append(intensity_from_fractions(station, ts, fractions))
    return vectors


def format_timestamp(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:00")


def parse_timestamp(text: str) -> datetime:
    ts = datetime.strptime(text.strip(), "%Y-%m-%dT%H:%M")
    if ts.minute:
        raise ValueError(f"timestamp {text!r} is not on the hour")
    return ts
