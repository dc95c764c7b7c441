"""Run configuration: one YAML (or JSON) file drives every subcommand.

Example::

    data:
      images: images            # <station_id>_<YYYY-MM-DDTHH>.png files
      pollution: pollution.csv
      holidays: holidays.txt    # optional; one ISO date per line
      out: out
    n_rings: 15
    palette:
      tolerance: 40
      green: [99, 214, 104]
      orange: [255, 151, 77]
      red: [242, 60, 50]
      darkred: [129, 31, 31]
    stations:
      - {id: CAM, radius_px: 500}                  # centred in the frame
      - {id: PED, radius_px: 500, centre_px: [960, 540]}
    training_stations: [CAM, MER, TLA]
    validation_station: PED

Relative paths are resolved against the directory holding the config file.
"""
from __future__ import annotations

from datetime import date
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .diagnostics import DEFAULT_CHI2_BINS, ThresholdPolicy
from .errors import ConfigError
from .maps import DEFAULT_REFERENCE_RGB, DEFAULT_TOLERANCE, DEFAULT_N_RINGS, ColourPalette, TrafficColour
from .pollution import DEFAULT_SENTINELS, CalendarPolicy, load_holidays
from .selection import SplitSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataPaths(_Strict):
    images: Optional[Path] = None
    pollution: Optional[Path] = None
    holidays: Optional[Path] = None
    dataset: Optional[Path] = None  # defaults to <out>/dataset.csv
    out: Path = Path("out")


RGB = tuple[int, int, int]


class PaletteConfig(_Strict):
    tolerance: float = DEFAULT_TOLERANCE
    green: RGB = DEFAULT_REFERENCE_RGB[TrafficColour.GREEN]
    orange: RGB = DEFAULT_REFERENCE_RGB[TrafficColour.ORANGE]
    red: RGB = DEFAULT_REFERENCE_RGB[TrafficColour.RED]
    darkred: RGB = DEFAULT_REFERENCE_RGB[TrafficColour.DARK_RED]

    def build(self) -> ColourPalette:
        return ColourPalette({
            TrafficColour.GREEN: self.green, TrafficColour.ORANGE: self.orange,
            TrafficColour.RED: self.red, TrafficColour.DARK_RED: self.darkred,
        }, self.tolerance)


class StationConfig(_Strict):
    id: str
    radius_px: float = Field(gt=0)
    centre_px: Optional[tuple[float, float]] = None


class CalendarConfig(_Strict):
    weekdays: list[int] = [0, 1, 2, 3, 4]
    hours: tuple[int, int] = (7, 22)


class SplitConfig(_Strict):
    train_fraction: float = 0.8
    seed: int = 0
    strategy: str = "random"


class CvConfig(_Strict):
    k: int = 5
    candidates: Optional[list[int]] = None
    paper_faithful_standardisation: bool = False


class SimilarityConfig(_Strict):
    candidates: Optional[list[str]] = None  # defaults to every non-validation station
    bins: int = DEFAULT_CHI2_BINS
    standardised: bool = False
    ssy_total: str = "explained"


class ThresholdConfig(_Strict):
    o3_ppb: float = 155.0
    pm10_ugm3: float = 214.0
    pm25_ugm3: float = 97.4


class RunConfig(_Strict):
    data: DataPaths = DataPaths()
    n_rings: int = Field(DEFAULT_N_RINGS, ge=1)
    palette: PaletteConfig = PaletteConfig()
    stations: list[StationConfig] = []
    calendar: CalendarConfig = CalendarConfig()
    null_sentinels: list[str] = list(DEFAULT_SENTINELS)
    period: Optional[tuple[date, date]] = None
    split: SplitConfig = SplitConfig()
    cv: CvConfig = CvConfig()
    training_stations: list[str] = []
    validation_station: Optional[str] = None
    similarity: SimilarityConfig = SimilarityConfig()
    thresholds: ThresholdConfig = ThresholdConfig()
    range_overlap_threshold: float = 0.9
    base_dir: Path = Path(".")

    @field_validator("stations")
    @classmethod
    def _unique_ids(cls, v):
        ids = [s.id for s in v]
        if len(ids) != len(set(ids)):
            raise ValueError("station ids must be unique")
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.validation_station is not None and self.validation_station in self.training_stations:
            raise ValueError(f"validation station {self.validation_station} is also a training station")
        known = {s.id for s in self.stations}
        if known:
            unknown = (set(self.training_stations) | {self.validation_station} | set(self.similarity.candidates or [])) - known - {None}
            if unknown:
                raise ValueError(f"stations not declared under 'stations': {sorted(unknown)}")
        return self

    # derived objects

    def path(self, p: Optional[Path]) -> Optional[Path]:
        if p is None:
            return None
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def out_dir(self) -> Path:
        return self.path(self.data.out)

    @property
    def dataset_path(self) -> Path:
        return self.path(self.data.dataset) if self.data.dataset else self.out_dir / "dataset.csv"

    def station(self, sid: str) -> StationConfig:
        for s in self.stations:
            if s.id == sid:
                return s
        raise ConfigError(f"station {sid!r} is not configured")

    def calendar_policy(self) -> CalendarPolicy:
        holidays = frozenset()
        if self.data.holidays is not None:
            holidays = load_holidays(self.require(self.data.holidays, "holidays"))
        return CalendarPolicy(frozenset(self.calendar.weekdays), tuple(self.calendar.hours), holidays)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.split.train_fraction, self.split.seed, self.split.strategy)

    def threshold_policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.thresholds.o3_ppb, self.thresholds.pm10_ugm3, self.thresholds.pm25_ugm3)

    def require(self, p: Optional[Path], what: str) -> Path:
        full = self.path(p)
        if full is None:
            raise ConfigError(f"config does not set data.{what}")
        if not full.exists():
            raise ConfigError(f"{what} path does not exist: {full}")
        return full


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw["base_dir"] = str(path.resolve().parent)
    return build_config(raw, **overrides)


def build_config(raw: dict, *, seed=None, stations=None, validation_station=None, split=None,
                 paper_faithful_standardisation=False, chi2_standardised=False, out=None) -> RunConfig:
    raw = dict(raw)
    if seed is not None:
        raw.setdefault("split", {})["seed"] = seed
    if stations is not None:
        raw["training_stations"] = stations
    if validation_station is not None:
        raw["validation_station"] = validation_station
    if split is not None:
        raw.setdefault("split", {})["strategy"] = split
    if paper_faithful_standardisation:
        raw.setdefault("cv", {})["paper_faithful_standardisation"] = True
    if chi2_standardised:
        raw.setdefault("similarity", {})["standardised"] = True
    if out is not None:
        raw.setdefault("data", {})["out"] = str(Path(out).resolve())
    try:
        cfg = RunConfig.model_validate(raw)
        cfg.palette.build()
        cfg.split_spec()
    except (ValidationError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg
