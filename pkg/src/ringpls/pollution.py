"""Station pollution records: parsing, completeness/calendar filters, alignment."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import DuplicateKey, EmptyJoin, ParseError, SchemaError
from .maps import (
    DEFAULT_N_RINGS,
    flatten_predictors,
    format_timestamp,
    parse_timestamp,
    predictor_names,
)

POLLUTANTS = ("PM10", "PM2.5", "PMCO", "SO2", "O3", "CO", "NO2", "NO", "NOX")
UNITS = ("ug/m3", "ug/m3", "ug/m3", "ppb", "ppb", "ppm", "ppb", "ppb", "ppb")
HEADER = ("station_id", "timestamp") + POLLUTANTS
DEFAULT_SENTINELS = ("", "-99")
TIMEZONE_LABEL = "America/Mexico_City"


@dataclass(frozen=True)
class PollutionRecord:
    station_id: str
    timestamp: datetime
    values: tuple  # NaN where null
    null_mask: tuple

    @property
    def complete(self) -> bool:
        return not any(self.null_mask)

    def value(self, pollutant: str) -> float | None:
        i = POLLUTANTS.index(pollutant)
        return None if self.null_mask[i] else self.values[i]


def make_record(station_id, timestamp, values) -> PollutionRecord:
    """Build a record from nine values where ``None``/NaN means missing."""
    vals, mask = [], []
    for v in values:
        missing = v is None or (isinstance(v, float) and math.isnan(v))
        vals.append(math.nan if missing else float(v))
        mask.append(missing)
    if len(vals) != len(POLLUTANTS):
        raise ValueError(f"expected {len(POLLUTANTS)} values, got {len(vals)}")
    return PollutionRecord(station_id, timestamp, tuple(vals), tuple(mask))


def parse_pollution_csv(source, sentinels=DEFAULT_SENTINELS) -> list[PollutionRecord]:
    """Parse the station CSV (path or open text file) into records.

    Fields equal to one of ``sentinels`` (after stripping) are nulls.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return parse_pollution_csv(fh, sentinels)
    sentinels = {s.strip() for s in sentinels}
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise SchemaError(f"expected header {','.join(HEADER)}, got {header}")
    records, seen = [], {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise ParseError(f"expected {len(HEADER)} fields, got {len(row)}", line)
        station = row[0].strip()
        if not station:
            raise ParseError("empty station_id", line)
        try:
            ts = parse_timestamp(row[1])
        except ValueError as exc:
            raise ParseError(str(exc), line) from None
        values = []
        for name, cell in zip(POLLUTANTS, row[2:]):
            cell = cell.strip()
            if cell in sentinels:
                values.append(None)
                continue
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{name}: not a number: {cell!r}", line) from None
            if not math.isfinite(v) or v < 0:
                raise ParseError(f"{name}: concentration must be finite and >= 0, got {cell}", line)
            values.append(v)
        key = (station, ts)
        if key in seen:
            raise DuplicateKey(f"line {line}: duplicate {station} {row[1]} (first on line {seen[key]})")
        seen[key] = line
        records.append(make_record(station, ts, values))
    return records


def write_pollution_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(HEADER)
        for r in sorted(records, key=lambda r: (r.station_id, r.timestamp)):
            out.writerow([r.station_id, format_timestamp(r.timestamp),
                          *("" if m else repr(v) for v, m in zip(r.values, r.null_mask))])


def filter_complete(records):
    return [r for r in records if r.complete]


@dataclass(frozen=True)
class CalendarPolicy:
    included_weekdays: frozenset = frozenset(range(5))  # Monday = 0
    hour_window: tuple = (7, 22)
    holidays: frozenset = frozenset()

    def __post_init__(self):
        start, end = self.hour_window
        if not (0 <= start <= end <= 23):
            raise ValueError(f"invalid hour window {self.hour_window}")
        if not set(self.included_weekdays) <= set(range(7)):
            raise ValueError(f"weekdays must be in 0..6, got {sorted(self.included_weekdays)}")
        for d in self.holidays:
            if not isinstance(d, date):
                raise ValueError(f"holiday {d!r} is not a date")

    def admits(self, ts: datetime) -> bool:
        start, end = self.hour_window
        return (ts.weekday() in self.included_weekdays
                and start <= ts.hour <= end
                and ts.date() not in self.holidays)


def filter_calendar(records, policy: CalendarPolicy):
    return [r for r in records if policy.admits(r.timestamp)]


def load_holidays(path) -> frozenset:
    days = set()
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                days.add(date.fromisoformat(text))
            except ValueError:
                raise ParseError(f"not an ISO date: {text!r}", n) from None
    return frozenset(days)


def completeness_report(records, period, stations=None, expected_slots=None) -> dict:
    """Fraction of complete hourly sets per station over ``period``.

    ``period`` is an inclusive ``(first_day, last_day)`` pair; the
    denominator is ``24 * days`` unless ``expected_slots`` overrides it.
    """
    first, last = period
    n_days = (last - first).days + 1
    slots = expected_slots if expected_slots is not None else 24 * n_days
    if stations is None:
        stations = sorted({r.station_id for r in records})
    counts = dict.fromkeys(stations, 0)
    for r in records:
        if r.station_id in counts and r.complete and first <= r.timestamp.date() <= last:
            counts[r.station_id] += 1
    return {s: (c / slots if slots else 0.0) for s, c in counts.items()}


@dataclass(eq=False)
class AlignedDataset:
    """Rows of (station, hour, 60 traffic predictors, 9 pollutants), sorted by key."""

    station_ids: list
    timestamps: list
    X: np.ndarray
    Y: np.ndarray
    x_names: list = field(default_factory=predictor_names)
    y_names: list = field(default_factory=lambda: list(POLLUTANTS))
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.station_ids)
        self.X = np.asarray(self.X, dtype=float).reshape(n, len(self.x_names))
        self.Y = np.asarray(self.Y, dtype=float).reshape(n, len(self.y_names))

    def __len__(self):
        return len(self.station_ids)

    @property
    def stations(self) -> list:
        return sorted(set(self.station_ids))

    def subset(self, idx) -> "AlignedDataset":
        idx = np.asarray(idx, dtype=int)
        return AlignedDataset(
            [self.station_ids[i] for i in idx], [self.timestamps[i] for i in idx],
            self.X[idx], self.Y[idx], list(self.x_names), list(self.y_names), dict(self.provenance),
        )

    def select_stations(self, stations) -> "AlignedDataset":
        wanted = set(stations)
        return self.subset([i for i, s in enumerate(self.station_ids) if s in wanted])

    def to_csv(self, path) -> str:
        """Write the dataset; returns the sha256 digest of the written bytes."""
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["station_id", "timestamp", *self.x_names, *self.y_names])
        for s, t, x, y in zip(self.station_ids, self.timestamps, self.X, self.Y):
            out.writerow([s, format_timestamp(t), *map(repr, x.tolist()), *map(repr, y.tolist())])
        data = buf.getvalue().encode()
        Path(path).write_bytes(data)
        return hashlib.sha256(data).hexdigest()

    @classmethod
    def from_csv(cls, path, n_targets: int = len(POLLUTANTS)) -> "AlignedDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:2] != ["station_id", "timestamp"]:
                raise SchemaError(f"{path}: not a dataset file")
            names = header[2:]
            x_names, y_names = names[:-n_targets], names[-n_targets:]
            sids, tss, rows = [], [], []
            for row in reader:
                sids.append(row[0])
                tss.append(parse_timestamp(row[1]))
                rows.append([float(v) for v in row[2:]])
        data = np.array(rows, dtype=float).reshape(len(rows), len(names))
        prov_path = Path(str(path) + ".provenance.json")
        prov = json.loads(prov_path.read_text()) if prov_path.exists() else {}
        return cls(sids, tss, data[:, :len(x_names)], data[:, len(x_names):], x_names, y_names, prov)


def align(intensities, pollution, stations=None, n_rings: int = DEFAULT_N_RINGS) -> AlignedDataset:
    """Inner join on (station, hour); incomplete pollution records are skipped."""
    wanted = None if stations is None else set(stations)

    def keep(sid):
        return wanted is None or sid in wanted

    traffic = {}
    for v in intensities:
        if keep(v.station_id):
            key = (v.station_id, v.timestamp)
            if key in traffic:
                raise DuplicateKey(f"duplicate intensity row {v.station_id} {v.timestamp}")
            traffic[key] = v
    polls, incomplete = {}, 0
    for r in pollution:
        if not keep(r.station_id):
            continue
        if not r.complete:
            incomplete += 1
            continue
        key = (r.station_id, r.timestamp)
        if key in polls:
            raise DuplicateKey(f"duplicate pollution row {r.station_id} {r.timestamp}")
        polls[key] = r
    keys = sorted(traffic.keys() & polls.keys())
    if not keys:
        raise EmptyJoin("no (station, hour) pairs in common between traffic and pollution data")
    X = np.array([flatten_predictors(traffic[k], n_rings) for k in keys])
    Y = np.array([polls[k].values for k in keys])
    prov = {
        "matched_rows": len(keys),
        "unmatched_traffic": len(traffic) - len(keys),
        "unmatched_pollution": len(polls) - len(keys),
        "incomplete_pollution_skipped": incomplete,
        "timezone": TIMEZONE_LABEL,
    }
    return AlignedDataset([k[0] for k in keys], [k[1] for k in keys], X, Y,
                          predictor_names(n_rings), list(POLLUTANTS), prov)


def hour_range(start: datetime, hours: int):
    return [start + timedelta(hours=h) for h in range(hours)]
