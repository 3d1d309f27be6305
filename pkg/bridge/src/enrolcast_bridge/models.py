"""Loaders for the pretrained model families.

Each loader returns an object with ``supports_covariates`` and
``predict(history, covariates, horizon, levels) -> [{"point", "quantiles"}]``.
Imports are guarded: a missing package or weight download failure surfaces
as :class:`BridgeError` at load time, which the server turns into an error
handshake and a nonzero exit.

Third-party APIs drift between releases; pin versions via the optional
dependency groups and check ``MODEL_CACHE_ENV`` for the weight cache
directory.
"""

from __future__ import annotations

import os

import numpy as np

from .residual import ResidualLinear
from .spec import BridgeError, BridgeModelSpec
from .stubs import stub_model

MODEL_CACHE_ENV = "ENROLCAST_BRIDGE_CACHE"

CHRONOS_BOLT_PRESETS = {
    "tiny": "amazon/chronos-bolt-tiny",
    "mini": "amazon/chronos-bolt-mini",
    "small": "amazon/chronos-bolt-small",
    "base": "amazon/chronos-bolt-base",
}
MOIRAI_PRESETS = {
    "small": "Salesforce/moirai-1.1-R-small",
    "base": "Salesforce/moirai-1.1-R-base",
    "large": "Salesforce/moirai-1.1-R-large",
}


def _cache_dir() -> str | None:
    return os.environ.get(MODEL_CACHE_ENV)


class ChronosBoltModel:
    """Direct-quantile-head Chronos-Bolt; served target-only."""

    supports_covariates = False

    def __init__(self, spec: BridgeModelSpec):
        try:
            import torch
            from chronos import BaseChronosPipeline
        except ImportError as exc:
            raise BridgeError(f"chronos-bolt needs the 'chronos' extra: {exc}")
        preset = CHRONOS_BOLT_PRESETS.get(spec.size)
        if preset is None:
            raise BridgeError(f"unknown chronos-bolt size {spec.size!r}")
        try:
            self.pipeline = BaseChronosPipeline.from_pretrained(
                preset, device_map=spec.device, cache_dir=_cache_dir()
            )
        except Exception as exc:  # download/device failures are load failures
            raise BridgeError(f"cannot load {preset}: {exc}")
        self.torch = torch

    def predict(self, history, covariates, horizon, levels):
        context = self.torch.tensor([float(v) for _, v in history])
        q_levels = [float(lv) for lv in levels] or [0.5]
        quantiles, mean = self.pipeline.predict_quantiles(
            context=context, prediction_length=horizon, quantile_levels=q_levels
        )
        q = quantiles[0].cpu().numpy()  # (horizon, len(levels))
        m = mean[0].cpu().numpy()
        steps = []
        for h in range(horizon):
            steps.append(
                {
                    "point": float(m[h]),
                    "quantiles": {lv: float(q[h, j]) for j, lv in enumerate(levels)},
                }
            )
        return steps


class Chronos2Model:
    """Chronos-2 with native covariate channels."""

    supports_covariates = True

    def __init__(self, spec: BridgeModelSpec):
        try:
            from chronos import Chronos2Pipeline
        except ImportError as exc:
            raise BridgeError(f"chronos-2 needs the 'chronos' extra: {exc}")
        try:
            self.pipeline = Chronos2Pipeline.from_pretrained(
                "amazon/chronos-2", device_map=spec.device, cache_dir=_cache_dir()
            )
        except Exception as exc:
            raise BridgeError(f"cannot load amazon/chronos-2: {exc}")

    def predict(self, history, covariates, horizon, levels):
        import pandas as pd

        years = [int(y) for y, _ in history]
        frame = {"id": ["s"] * len(years),
                 "timestamp": pd.to_datetime([f"{y}-01-01" for y in years]),
                 "target": [float(v) for _, v in history]}
        for name in sorted(covariates):
            cov = dict((int(y), float(v)) for y, v in covariates[name])
            frame[name] = [cov.get(y, float("nan")) for y in years]
        df = pd.DataFrame(frame)
        q_levels = [float(lv) for lv in levels] or [0.5]
        pred = self.pipeline.predict_quantiles(
            df, prediction_length=horizon, quantile_levels=q_levels
        )
        steps = []
        for h in range(horizon):
            row = pred.iloc[h]
            point = float(row.get("predictions", row.get("0.5", row.iloc[-1])))
            steps.append(
                {
                    "point": point,
                    "quantiles": {lv: float(row[str(lv)]) for lv in levels},
                }
            )
        return steps


class MoiraiModel:
    """Masked-encoder Moirai; covariates enter as dynamic real channels and
    quantiles come from a seeded sample budget."""

    supports_covariates = True

    def __init__(self, spec: BridgeModelSpec):
        try:
            import torch
            from uni2ts.model.moirai import MoiraiForecast, MoiraiModule
        except ImportError as exc:
            raise BridgeError(f"moirai needs the 'moirai' extra: {exc}")
        preset = MOIRAI_PRESETS.get(spec.size)
        if preset is None:
            raise BridgeError(f"unknown moirai size {spec.size!r}")
        try:
            self.module = MoiraiModule.from_pretrained(preset, cache_dir=_cache_dir())
        except Exception as exc:
            raise BridgeError(f"cannot load {preset}: {exc}")
        self.MoiraiForecast = MoiraiForecast
        self.torch = torch
        self.spec = spec

    def predict(self, history, covariates, horizon, levels):
        names = sorted(covariates)
        years = [int(y) for y, _ in history]
        target = np.array([float(v) for _, v in history])
        feats = None
        if names:
            cols = []
            for name in names:
                cov = dict((int(y), float(v)) for y, v in covariates[name])
                col = [cov.get(y, np.nan) for y in years]
                cols.append(col)
            feats = np.array(cols, dtype=float)
        model = self.MoiraiForecast(
            module=self.module,
            prediction_length=horizon,
            context_length=len(target),
            patch_size="auto",
            num_samples=self.spec.sample_paths,
            target_dim=1,
            feat_dynamic_real_dim=len(names),
            past_feat_dynamic_real_dim=0,
        )
        self.torch.manual_seed(self.spec.seed)
        past_target = self.torch.tensor(target[None, :, None], dtype=self.torch.float32)
        kwargs = {
            "past_target": past_target,
            "past_observed_target": self.torch.ones_like(past_target, dtype=self.torch.bool),
            "past_is_pad": self.torch.zeros(past_target.shape[:2], dtype=self.torch.bool),
        }
        if feats is not None:
            # held at the last observed value over the horizon
            future = np.repeat(feats[:, -1:], horizon, axis=1)
            full = np.concatenate([feats, future], axis=1).T[None]
            kwargs["feat_dynamic_real"] = self.torch.tensor(full, dtype=self.torch.float32)
            kwargs["observed_feat_dynamic_real"] = self.torch.ones_like(
                kwargs["feat_dynamic_real"], dtype=self.torch.bool
            )
        samples = model(**kwargs)[0].cpu().numpy()  # (num_samples, horizon)
        return _steps_from_samples(samples, horizon, levels)


class TimesFmModel:
    """Decoder-only TimesFM; covariates via the residual-linear wrapper."""

    supports_covariates = False

    def __init__(self, spec: BridgeModelSpec):
        try:
            import timesfm
        except ImportError as exc:
            raise BridgeError(f"timesfm needs the 'timesfm' extra: {exc}")
        repo = {
            "200m": "google/timesfm-1.0-200m-pytorch",
            "500m": "google/timesfm-2.0-500m-pytorch",
        }.get(spec.size)
        if repo is None:
            raise BridgeError(f"unknown timesfm size {spec.size!r}")
        try:
            self.model = timesfm.TimesFm(
                hparams=timesfm.TimesFmHparams(backend=spec.device),
                checkpoint=timesfm.TimesFmCheckpoint(huggingface_repo_id=repo),
            )
        except Exception as exc:
            raise BridgeError(f"cannot load {repo}: {exc}")

    def predict(self, history, covariates, horizon, levels):
        target = [float(v) for _, v in history]
        point, quantile_fc = self.model.forecast([np.array(target)], freq=[0])
        point = np.asarray(point)[0][:horizon]
        q = np.asarray(quantile_fc)[0]  # (horizon, len(model quantiles))
        model_levels = np.linspace(0.1, 0.9, q.shape[1])
        steps = []
        for h in range(horizon):
            qs = {
                lv: float(np.interp(float(lv), model_levels, q[h]))
                for lv in levels
            }
            steps.append({"point": float(point[h]), "quantiles": qs})
        return steps


def _steps_from_samples(samples: np.ndarray, horizon: int, levels) -> list[dict]:
    steps = []
    for h in range(horizon):
        col = samples[:, h]
        steps.append(
            {
                "point": float(np.mean(col)),
                "quantiles": {lv: float(np.quantile(col, float(lv))) for lv in levels},
            }
        )
    return steps


_FAMILY_LOADERS = {
    "chronos-bolt": ChronosBoltModel,
    "chronos-2": Chronos2Model,
    "moirai": MoiraiModel,
    "timesfm": TimesFmModel,
}


def load_model(spec: BridgeModelSpec):
    """Instantiate the configured model, wrapping for covariate mode."""
    if spec.family.startswith("stub-"):
        base = stub_model(spec)
    else:
        base = _FAMILY_LOADERS[spec.family](spec)
    if spec.covariate_mode == "residual-linear":
        return ResidualLinear(base)
    return base
