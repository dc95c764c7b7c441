"""Traffic-map ring intensities to air-pollution regression with PLS."""
from .errors import RingPlsError
from .maps import (
    ColourPalette,
    IntensityVector,
    RingGeometry,
    TrafficColour,
    build_rings,
    classify_image,
    classify_pixel,
    count_snapshot,
    flatten_predictors,
    to_intensity,
)
from .pls import PlsrModel, fit_plsr, load_model, plsr_fit, plsr_predict, save_model
from .pollution import AlignedDataset, CalendarPolicy, align, parse_pollution_csv
from .selection import SplitSpec, evaluate, kfold_rmse, split

__version__ = "0.1.0"

__all__ = [
    "AlignedDataset", "CalendarPolicy", "ColourPalette", "IntensityVector", "PlsrModel",
    "RingGeometry", "RingPlsError", "SplitSpec", "TrafficColour", "align", "build_rings",
    "classify_image", "classify_pixel", "count_snapshot", "evaluate", "fit_plsr",
    "flatten_predictors", "kfold_rmse", "load_model", "parse_pollution_csv", "plsr_fit",
    "plsr_predict", "save_model", "split", "to_intensity",
]
