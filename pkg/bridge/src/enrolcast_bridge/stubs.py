"""Deterministic stand-in models: full protocol coverage without downloads."""

from __future__ import annotations

import numpy as np

from .spec import BridgeModelSpec


class PersistenceStub:
    """Last observed level carried forward, degenerate quantiles."""

    supports_covariates = False

    def __init__(self, spec: BridgeModelSpec):
        self.spec = spec

    def predict(self, history, covariates, horizon, levels):
        last = float(history[-1][1])
        return [
            {"point": last, "quantiles": {lv: last for lv in levels}}
            for _ in range(horizon)
        ]


class NoisyPersistenceStub:
    """Persistence plus seeded Gaussian spread: reproducible per (seed,
    request shape), monotone quantiles by construction."""

    supports_covariates = False

    def __init__(self, spec: BridgeModelSpec):
        self.spec = spec

    def predict(self, history, covariates, horizon, levels):
        last = float(history[-1][1])
        scale = max(1.0, 0.02 * abs(last))
        # derive the stream from the seed and the request shape only, so
        # identical requests always see identical draws
        rng = np.random.default_rng(self.spec.seed + len(history) * 1009 + horizon)
        draws = np.sort(rng.normal(0.0, scale, size=self.spec.sample_paths))
        steps = []
        for h in range(horizon):
            point = last + float(draws.mean())
            qs = {
                lv: last + float(np.quantile(draws, lv)) for lv in levels
            }
            steps.append({"point": point, "quantiles": qs})
        return steps


def stub_model(spec: BridgeModelSpec):
    if spec.family == "stub-persistence":
        return PersistenceStub(spec)
    if spec.family == "stub-noisy-persistence":
        return NoisyPersistenceStub(spec)
    raise ValueError(f"{spec.family} is not a stub family")
