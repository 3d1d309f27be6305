"""enrolcast: leakage-safe backtesting for sparse annual forecasting.

The package is organised around the flow of an annual planning experiment:

- :mod:`enrolcast.timebase` -- year-indexed series with vintage stamps,
  datasets, and the training-window leakage guard;
- :mod:`enrolcast.features` -- EWMA/lag covariate engineering and
  within-window standardization;
- :mod:`enrolcast.ioci` -- the deterministic operating-conditions index
  engine (strict scoring, reference calibration, diagnostics, schema);
- :mod:`enrolcast.baselines` -- persistence and exact-ML ARIMA/ARIMAX;
- :mod:`enrolcast.adapters` -- the uniform forecaster abstraction and the
  child-process wire protocol for external models;
- :mod:`enrolcast.backtest` -- the expanding-window engine and its reports;
- :mod:`enrolcast.metrics` -- point errors, quantile CRPS, interval scores,
  PIT diagnostics, effect sizes, and rank aggregation;
- :mod:`enrolcast.cli` -- the ``enrolcast`` command.
"""

__version__ = "0.1.0"

from .timebase import (  # noqa: F401
    AnnualSeries,
    Cohort,
    CovariateSet,
    Dataset,
    Finding,
    Point,
    TimebaseError,
    align_to_common_grid,
    load_dataset,
    slice_training_window,
    validate_dataset,
)
from .quantiles import QuantileForecast, StepForecast, repair_quantiles  # noqa: F401
