"""Residual-linear covariate handling for covariate-blind models.

The base model forecasts from target history alone; a linear model fitted
on its historical one-step residuals against the contemporaneous covariates
shifts the forecast. With no covariates in the request the wrapper is a
no-op, so the wrapped reply equals the base reply exactly.
"""

from __future__ import annotations

import numpy as np


class ResidualLinear:
    supports_covariates = True

    def __init__(self, base, min_history: int = 1):
        self.base = base
        self.min_history = min_history

    def predict(self, history, covariates, horizon, levels):
        base_steps = self.base.predict(history, covariates, horizon, levels)
        names = sorted(covariates)
        if not names:
            return base_steps
        cov = {n: dict((int(y), float(v)) for y, v in covariates[n]) for n in names}
        rows, resids = [], []
        for i in range(self.min_history, len(history)):
            year, actual = int(history[i][0]), float(history[i][1])
            if not all(year in cov[n] for n in names):
                continue
            replay = self.base.predict(history[:i], {}, 1, [])
            resids.append(actual - float(replay[0]["point"]))
            rows.append([cov[n][year] for n in names])
        if len(resids) < len(names) + 2 or not np.any(np.asarray(rows)):
            return base_steps
        X = np.column_stack([np.ones(len(rows)), np.asarray(rows)])
        b, *_ = np.linalg.lstsq(X, np.asarray(resids), rcond=None)
        future_row = [cov[n][max(cov[n])] for n in names]
        adjust = float(b[0] + np.asarray(future_row) @ b[1:])
        return [
            {
                "point": s["point"] + adjust,
                "quantiles": {lv: v + adjust for lv, v in s["quantiles"].items()},
            }
            for s in base_steps
        ]
