"""Uniform forecaster abstraction and the external adapter wire protocol.

A forecaster -- a built-in baseline, a wrapped model, or a child process
hosting a foundation model -- is anything with a ``name``, a
``supports_covariates`` flag, and a ``forecast(request)`` method returning a
:class:`~enrolcast.quantiles.QuantileForecast`.  The engine never trains an
adapter; it only sends leakage-safe request payloads and validates replies.

Wire protocol (``enrolcast-adapter/1``): newline-delimited JSON over the
child process's stdin/stdout, one request in flight per session.

* handshake, server -> client, first line::

    {"protocol": "enrolcast-adapter/1", "name": "...", "supports_covariates": false}

* request, client -> server (field names mirror :class:`ForecastRequest`;
  unknown fields must be ignored)::

    {"request_id": "r-1", "series_id": "domestic",
     "target_history": [[2007, 4800.0], ...],
     "covariate_history": {"ioci": [[2007, 15.0], ...]},
     "horizon": 1, "quantile_levels": [0.1, 0.5, 0.9]}

* response, server -> client; quantile map keys are decimal strings::

    {"request_id": "r-1", "steps": [{"point": 4810.0,
                                     "quantiles": {"0.1": 4500.0, ...}}]}

* error response: ``{"request_id": "r-1", "error": {"type": "...",
  "message": "..."}}`` -- the session stays alive.

``ENROLCAST_ADAPTER_TIMEOUT`` (seconds) overrides the descriptor timeout.
"""

from __future__ import annotations

import json
import os
import queue
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import numpy as np

from . import baselines
from .quantiles import QuantileError, QuantileForecast, StepForecast, repair_quantiles
from .timebase import CovariateSet

__all__ = [
    "AdapterError",
    "AdapterTimeout",
    "ProtocolError",
    "PROTOCOL_VERSION",
    "TIMEOUT_ENV_VAR",
    "ForecastRequest",
    "AdapterDescriptor",
    "Forecaster",
    "PersistenceAdapter",
    "ArimaAdapter",
    "EchoAdapter",
    "ChildProcessAdapter",
    "ResidualCovariateAdapter",
    "forecast",
    "residual_covariate_wrap",
    "resolve_adapter",
    "request_to_wire",
    "reply_from_wire",
]

PROTOCOL_VERSION = "enrolcast-adapter/1"
TIMEOUT_ENV_VAR = "ENROLCAST_ADAPTER_TIMEOUT"
WRAPPER_INACTIVE_FLAG = "wrapper inactive"


class AdapterError(RuntimeError):
    pass


class AdapterTimeout(AdapterError):
    pass


class ProtocolError(AdapterError):
    """Malformed traffic; the offending raw payload is retained."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ForecastRequest:
    request_id: str
    series_id: str
    target_history: tuple[tuple[int, float], ...]
    covariate_history: Mapping[str, tuple[tuple[int, float], ...]]
    horizon: int = 1
    quantile_levels: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not self.request_id:
            raise AdapterError("request_id must be non-empty")
        hist = tuple((int(y), float(v)) for y, v in self.target_history)
        if not hist:
            raise AdapterError("target history must be non-empty")
        if self.horizon < 1:
            raise AdapterError("horizon must be >= 1")
        levels = tuple(float(v) for v in self.quantile_levels)
        for a, b in zip(levels, levels[1:]):
            if b <= a:
                raise AdapterError("quantile levels must be strictly increasing")
        for lv in levels:
            if not 0.0 < lv < 1.0:
                raise AdapterError(f"quantile level {lv} outside (0, 1)")
        last_year = hist[-1][0]
        cov = {}
        for name, pairs in self.covariate_history.items():
            pairs = tuple((int(y), float(v)) for y, v in pairs)
            for y, _ in pairs:
                if y > last_year:
                    raise AdapterError(
                        f"covariate {name!r} carries year {y} beyond the target origin {last_year}"
                    )
            cov[name] = pairs
        object.__setattr__(self, "target_history", hist)
        object.__setattr__(self, "covariate_history", cov)
        object.__setattr__(self, "quantile_levels", levels)

    @property
    def origin(self) -> int:
        return self.target_history[-1][0]

    def target_values(self) -> tuple[float, ...]:
        return tuple(v for _, v in self.target_history)


@dataclass(frozen=True)
class AdapterDescriptor:
    name: str
    transport: str = "in-process"  # or "child-process"
    command: str | None = None
    timeout_seconds: int = 60
    supports_covariates: bool = False

    def __post_init__(self) -> None:
        if self.transport not in ("in-process", "child-process"):
            raise AdapterError(f"unknown transport {self.transport!r}")
        if self.transport == "child-process" and not self.command:
            raise AdapterError("child-process descriptors need a command")
        if self.timeout_seconds <= 0:
            raise AdapterError("timeout must be positive")


class Forecaster(Protocol):
    name: str
    supports_covariates: bool

    def forecast(self, request: ForecastRequest) -> QuantileForecast: ...


# ---------------------------------------------------------------------------
# built-in reference adapters


class PersistenceAdapter:
    """Last observed level carried forward; ignores covariates."""

    name = "persistence"
    supports_covariates = False
    deterministic = True

    def forecast(self, request: ForecastRequest) -> QuantileForecast:
        return baselines.persistence_forecast(
            request.target_values(), request.horizon, request.quantile_levels
        )

    def close(self) -> None:
        pass


class ArimaAdapter:
    """Auto-selected or fixed-order ARIMA refit on every request window.

    Covariates become exogenous regressors over the years where the target
    and every covariate overlap contiguously; forecasts hold future
    regressor values at their last observed level.
    """

    supports_covariates = True
    deterministic = True

    def __init__(self, order: baselines.ArimaOrder | None = None, name: str = "arima"):
        self.order = order
        self.name = name

    def _exog_for(self, request: ForecastRequest) -> tuple[np.ndarray | None, list[int]]:
        names = sorted(request.covariate_history)
        if not names:
            return None, [y for y, _ in request.target_history]
        maps = {n: dict(request.covariate_history[n]) for n in names}
        years = [y for y, _ in request.target_history if all(y in maps[n] for n in names)]
        # longest contiguous suffix so the ARMA recursion sees no gaps
        suffix: list[int] = []
        for y in years:
            if suffix and y != suffix[-1] + 1:
                suffix = []
            suffix.append(y)
        if len(suffix) < 3:
            return None, [y for y, _ in request.target_history]
        X = np.array([[maps[n][y] for n in names] for y in suffix])
        return X, suffix

    def forecast(self, request: ForecastRequest) -> QuantileForecast:
        X, years = self._exog_for(request)
        tmap = dict(request.target_history)
        y = [tmap[yy] for yy in years]
        order = self.order if self.order is not None else baselines.arima_order_select(y, exog=X)
        fit = baselines.arima_fit(y, order, exog=X)
        fc = baselines.arima_forecast(
            fit, y, exog_history=X, horizon=request.horizon,
            quantile_levels=request.quantile_levels,
        )
        return fc.quantile_forecast()

    def close(self) -> None:
        pass


class EchoAdapter:
    """Deterministic protocol-exercise adapter: replies derive only from the
    request shape, so identical requests must produce identical replies."""

    name = "echo"
    supports_covariates = True
    deterministic = True

    def forecast(self, request: ForecastRequest) -> QuantileForecast:
        base = float(request.horizon)
        steps = tuple(
            StepForecast(base, {lv: base + lv for lv in request.quantile_levels})
            for _ in range(request.horizon)
        )
        return QuantileForecast(steps=steps)

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# child-process sessions


def request_to_wire(request: ForecastRequest) -> str:
    doc = {
        "request_id": request.request_id,
        "series_id": request.series_id,
        "target_history": [[y, v] for y, v in request.target_history],
        "covariate_history": {
            name: [[y, v] for y, v in pairs]
            for name, pairs in sorted(request.covariate_history.items())
        },
        "horizon": request.horizon,
        "quantile_levels": list(request.quantile_levels),
    }
    return json.dumps(doc)


def reply_from_wire(line: str, request: ForecastRequest) -> QuantileForecast:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"unparsable reply: {exc}", raw=line)
    if not isinstance(doc, dict):
        raise ProtocolError("reply is not an object", raw=line)
    if doc.get("request_id") != request.request_id:
        raise ProtocolError(
            f"reply for {doc.get('request_id')!r} does not match request {request.request_id!r}",
            raw=line,
        )
    if "error" in doc:
        err = doc["error"]
        raise ProtocolError(f"adapter error reply: {err}", raw=line)
    steps_doc = doc.get("steps")
    if not isinstance(steps_doc, list) or not steps_doc:
        raise ProtocolError("reply carries no steps", raw=line)
    steps = []
    try:
        for sd in steps_doc:
            q = {float(k): float(v) for k, v in sd.get("quantiles", {}).items()}
            steps.append(StepForecast(point=float(sd["point"]), quantiles=q))
    except (KeyError, TypeError, ValueError, QuantileError) as exc:
        raise ProtocolError(f"malformed step in reply: {exc}", raw=line)
    return QuantileForecast(steps=tuple(steps))


class ChildProcessAdapter:
    """One serially-used protocol session over a child process.

    The process is spawned lazily; its handshake line announces the protocol
    version and covariate support.  At most one request is in flight; a
    reply missing the deadline kills the session and surfaces a timeout.
    """

    def __init__(self, descriptor: AdapterDescriptor):
        if descriptor.transport != "child-process":
            raise AdapterError("descriptor is not child-process")
        self.descriptor = descriptor
        self.name = descriptor.name
        self.supports_covariates = descriptor.supports_covariates
        self.deterministic = False
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self._lock = threading.Lock()

    @property
    def timeout(self) -> float:
        env = os.environ.get(TIMEOUT_ENV_VAR)
        if env:
            try:
                return float(env)
            except ValueError:
                pass
        return float(self.descriptor.timeout_seconds)

    def _spawn(self) -> None:
        self._proc = subprocess.Popen(
            shlex.split(self.descriptor.command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines = queue.Queue()

        def pump(proc, sink):
            for line in proc.stdout:
                sink.put(line)
            sink.put(None)  # EOF marker

        threading.Thread(target=pump, args=(self._proc, self._lines), daemon=True).start()
        handshake = self._read_line()
        try:
            doc = json.loads(handshake)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparsable handshake: {exc}", raw=handshake)
        if doc.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol mismatch: expected {PROTOCOL_VERSION}, got {doc.get('protocol')!r}",
                raw=handshake,
            )
        self.supports_covariates = bool(
            doc.get("supports_covariates", self.descriptor.supports_covariates)
        )

    def _read_line(self) -> str:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise AdapterTimeout(
                f"adapter timeout: {self.name} sent nothing within {self.timeout}s"
            )
        if line is None:
            # the process died mid-request: same failure class as a hang
            self._kill()
            raise AdapterTimeout(f"adapter timeout: {self.name} exited before replying")
        return line.rstrip("\n")

    def _kill(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
        self._proc = None

    def forecast(self, request: ForecastRequest) -> QuantileForecast:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._spawn()
            try:
                self._proc.stdin.write(request_to_wire(request) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._kill()
                raise ProtocolError(f"adapter {self.name} pipe failed: {exc}")
            line = self._read_line()
        return reply_from_wire(line, request)

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None


# ---------------------------------------------------------------------------
# the engine-side forecast call


def forecast(adapter, request: ForecastRequest) -> QuantileForecast:
    """Run one request through an adapter and validate the reply.

    Enforces the horizon length, the presence of every requested quantile
    level, and quantile monotonicity (tiny crossings are repaired, gross
    ones rejected).
    """
    reply = adapter.forecast(request)
    if len(reply.steps) != request.horizon:
        raise ProtocolError(
            f"adapter {adapter.name} replied {len(reply.steps)} steps for horizon {request.horizon}"
        )
    fixed = []
    for step in reply.steps:
        repaired = repair_quantiles(step.quantiles)
        for lv in request.quantile_levels:
            if not any(abs(lv - k) <= 1e-9 for k in repaired):
                raise ProtocolError(
                    f"adapter {adapter.name} reply misses quantile level {lv:g}"
                )
        fixed.append(StepForecast(point=step.point, quantiles=repaired))
    return QuantileForecast(steps=tuple(fixed), flags=reply.flags)


# ---------------------------------------------------------------------------
# residual-covariate wrapper


class ResidualCovariateAdapter:
    """Covariate awareness for covariate-blind forecasters.

    Replays the base adapter over expanding prefixes of the request's own
    training window to collect one-step residuals, regresses them (with an
    intercept) on the contemporaneous covariates, and shifts the base
    forecast -- point and quantiles alike -- by the fitted adjustment.
    Degenerate setups (too few residuals, all-zero covariates) fall back to
    the untouched base forecast with a flag.
    """

    supports_covariates = True

    def __init__(self, base, covariates: CovariateSet | None = None, min_history: int = 1):
        self.base = base
        self.covariates = covariates
        self.min_history = min_history
        self.name = f"{base.name}+residual-covariates"
        self.deterministic = getattr(base, "deterministic", False)

    def _covariate_pairs(self, request: ForecastRequest) -> dict[str, dict[int, float]]:
        if self.covariates is not None:
            out = {}
            for cname, s in sorted(self.covariates.series.items()):
                lag = self.covariates.lag_years.get(cname, 0)
                out[cname] = {
                    p.year + lag: p.value
                    for p in s.points
                    if not p.missing and p.year + lag <= request.origin
                }
            return out
        return {name: dict(pairs) for name, pairs in sorted(request.covariate_history.items())}

    def forecast(self, request: ForecastRequest) -> QuantileForecast:
        base_fc = forecast(self.base, request)
        cov = self._covariate_pairs(request)
        names = sorted(cov)
        if not names:
            return base_fc
        history = request.target_history
        k = len(names)
        rows = []
        resids = []
        for i in range(self.min_history, len(history)):
            year, actual = history[i]
            if not all(year in cov[n] for n in names):
                continue
            prefix = history[:i]
            sub = ForecastRequest(
                request_id=f"{request.request_id}/replay-{year}",
                series_id=request.series_id,
                target_history=prefix,
                covariate_history={
                    n: tuple((y, v) for y, v in sorted(cov[n].items()) if y <= prefix[-1][0])
                    for n in names
                }
                if self.base.supports_covariates
                else {},
                horizon=1,
                quantile_levels=(),
            )
            base_point = forecast(self.base, sub).steps[0].point
            resids.append(actual - base_point)
            rows.append([cov[n][year] for n in names])
        if len(resids) < k + 2:
            return QuantileForecast(
                steps=base_fc.steps, flags=base_fc.flags + (WRAPPER_INACTIVE_FLAG,)
            )
        X = np.column_stack([np.ones(len(rows)), np.array(rows)])
        if not np.any(np.asarray(rows)):
            return QuantileForecast(
                steps=base_fc.steps,
                flags=base_fc.flags + (WRAPPER_INACTIVE_FLAG + ": zero covariates",),
            )
        b, *_ = np.linalg.lstsq(X, np.asarray(resids), rcond=None)
        future_row = [cov[n][max(cov[n])] for n in names]  # held at last observed
        adjust = float(b[0] + np.asarray(future_row) @ b[1:])
        steps = tuple(
            StepForecast(
                point=s.point + adjust,
                quantiles={lv: v + adjust for lv, v in s.quantiles.items()},
            )
            for s in base_fc.steps
        )
        return QuantileForecast(steps=steps, flags=base_fc.flags)

    def close(self) -> None:
        close = getattr(self.base, "close", None)
        if close:
            close()


def residual_covariate_wrap(base, covariates: CovariateSet | None = None) -> ResidualCovariateAdapter:
    return ResidualCovariateAdapter(base, covariates)


# ---------------------------------------------------------------------------
# descriptor resolution

_BUILTIN = {
    "persistence": PersistenceAdapter,
    "echo": EchoAdapter,
}


def resolve_adapter(descriptor: AdapterDescriptor):
    """Instantiate the forecaster a descriptor names.

    In-process commands: ``persistence``, ``echo``, ``arima`` or
    ``arima:p,d,q``; child-process descriptors spawn protocol sessions.
    """
    if descriptor.transport == "child-process":
        return ChildProcessAdapter(descriptor)
    command = descriptor.command or descriptor.name
    if command in _BUILTIN:
        adapter = _BUILTIN[command]()
        adapter.name = descriptor.name
        return adapter
    if command == "arima":
        return ArimaAdapter(name=descriptor.name)
    if command.startswith("arima:"):
        try:
            p, d, q = (int(v) for v in command.split(":", 1)[1].split(","))
        except ValueError:
            raise AdapterError(f"bad arima order spec {command!r}")
        return ArimaAdapter(order=baselines.ArimaOrder(p, d, q), name=descriptor.name)
    raise AdapterError(f"unknown in-process adapter {command!r}")
