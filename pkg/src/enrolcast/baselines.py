"""Classical reference forecasters: persistence and ARIMA/ARIMAX.

The ARIMA implementation is self-contained: a non-seasonal (p, d, q) model
with optional exogenous regressors, estimated by exact Gaussian maximum
likelihood through a state-space innovations recursion.  The regression
part (intercept and exogenous coefficients) and the innovation variance are
concentrated out of the likelihood, so the derivative-free optimiser only
searches the (p + q)-dimensional ARMA coefficient space, reparameterised
through partial autocorrelations so every iterate is stationary and
invertible.  Everything is deterministic: fixed starting point, fixed step
rules, no randomness anywhere in fitting.

Exogenous regressors enter as a mean shift on the differenced scale
(regression with ARMA errors); unknown future regressor values are held at
their last observed level, so no future information is ever injected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize, stats

from .quantiles import QuantileForecast, StepForecast, gaussian_quantiles
from .timebase import AnnualSeries

__all__ = [
    "ArimaError",
    "ArimaOrder",
    "ArimaFit",
    "ArimaForecast",
    "ArimaForecastStep",
    "PredictionInterval",
    "ResidualReport",
    "persistence_forecast",
    "difference",
    "undifference",
    "arima_loglik",
    "arima_fit",
    "arima_order_select",
    "arima_forecast",
    "residual_diagnostics",
    "default_order_grid",
]

MAX_P = 3
MAX_Q = 3
MAX_D = 2
_LOG_2PI = math.log(2.0 * math.pi)
_BIG = 1e10


class ArimaError(ValueError):
    pass


@dataclass(frozen=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self) -> None:
        if not (0 <= self.p <= MAX_P and 0 <= self.q <= MAX_Q):
            raise ArimaError(f"order p={self.p}, q={self.q} outside caps ({MAX_P}, {MAX_Q})")
        if not 0 <= self.d <= MAX_D:
            raise ArimaError(f"differencing d={self.d} outside [0, {MAX_D}]")


@dataclass(frozen=True)
class PredictionInterval:
    level: float
    lower: float
    upper: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.level < 1.0:
            raise ArimaError(f"interval level {self.level} outside [0, 1)")
        if self.lower > self.upper:
            raise ArimaError("interval lower bound above upper bound")


@dataclass(frozen=True)
class ArimaFit:
    order: ArimaOrder
    c: float
    phi: tuple[float, ...]
    theta: tuple[float, ...]
    beta: tuple[float, ...]
    sigma2: float
    loglik: float
    aicc: float
    n_obs: int
    include_constant: bool

    def __post_init__(self) -> None:
        if self.sigma2 <= 0.0:
            raise ArimaError(f"innovation variance must be positive, got {self.sigma2!r}")
        if self.phi and not _roots_outside_unit(1.0, tuple(-p for p in self.phi)):
            raise ArimaError(f"AR coefficients {self.phi} are not stationary")
        if self.theta and not _roots_outside_unit(1.0, self.theta):
            raise ArimaError(f"MA coefficients {self.theta} are not invertible")


@dataclass(frozen=True)
class ArimaForecastStep:
    point: float
    error_sd: float
    intervals: tuple[PredictionInterval, ...]
    quantiles: Mapping[float, float]


@dataclass(frozen=True)
class ArimaForecast:
    steps: tuple[ArimaForecastStep, ...]

    @property
    def points(self) -> tuple[float, ...]:
        return tuple(s.point for s in self.steps)

    def quantile_forecast(self) -> QuantileForecast:
        return QuantileForecast(
            steps=tuple(StepForecast(s.point, dict(s.quantiles)) for s in self.steps)
        )


@dataclass(frozen=True)
class ResidualReport:
    std_residuals: tuple[float, ...]
    lags: int
    lb_stat: float | None
    lb_pvalue: float | None
    normality_pvalue: float | None
    degenerate: bool

    @property
    def white(self) -> bool | None:
        if self.lb_pvalue is None:
            return None
        return self.lb_pvalue > 0.05


# ---------------------------------------------------------------------------
# helpers


def _values(data) -> np.ndarray:
    if isinstance(data, AnnualSeries):
        vals = [p.value for p in data.observed()]
    else:
        vals = list(data)
    arr = np.asarray(vals, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ArimaError("data must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(arr)):
        raise ArimaError("data contains non-finite values")
    return arr


def _exog_matrix(exog, n: int) -> np.ndarray:
    if exog is None:
        return np.empty((n, 0))
    arr = np.asarray(exog, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != n:
        raise ArimaError(f"exogenous matrix has {arr.shape[0]} rows for {n} observations")
    if not np.all(np.isfinite(arr)):
        raise ArimaError("exogenous matrix contains non-finite values")
    return arr


def _roots_outside_unit(lead: float, coeffs: Sequence[float]) -> bool:
    """True when lead + c1 z + ... + ck z^k has all roots outside the unit circle."""
    poly = [lead] + list(coeffs)
    while poly and abs(poly[-1]) < 1e-300:
        poly.pop()
    if len(poly) <= 1:
        return True
    roots = np.roots(poly[::-1])
    # boundary-hugging fits (e.g. an overdifferenced MA near -1) are valid
    return bool(np.all(np.abs(roots) > 1.0 - 1e-9))


def _pacf_to_ar(pacf: Sequence[float]) -> list[float]:
    """Durbin-Levinson map: partial autocorrelations in (-1, 1) to a
    stationary AR coefficient vector."""
    phi: list[float] = []
    for r in pacf:
        phi = [pj - r * phi[-1 - j] for j, pj in enumerate(phi)] + [r]
    return phi


def _transform_params(z: Sequence[float], p: int, q: int) -> tuple[list[float], list[float]]:
    """Unconstrained optimiser point -> (phi, theta) in the admissible region."""
    z = list(z)
    pac_ar = [math.tanh(v) for v in z[:p]]
    pac_ma = [math.tanh(v) for v in z[p : p + q]]
    phi = _pacf_to_ar(pac_ar)
    theta = [-c for c in _pacf_to_ar(pac_ma)]
    return phi, theta


def difference(values: Sequence[float], d: int):
    """d-th order differences; integer-exact on integer inputs."""
    vals = list(values)
    if d < 0:
        raise ArimaError("d must be >= 0")
    if d >= len(vals):
        raise ArimaError(f"cannot difference {len(vals)} points {d} times")
    for _ in range(d):
        vals = [b - a for a, b in zip(vals, vals[1:])]
    return vals


def undifference(diffs: Sequence[float], anchors: Sequence[float], d: int):
    """Invert d-th differencing: rebuild the values following the anchors.

    ``anchors`` are the last d observed values before the block being
    reconstructed; ``undifference(difference(x, d), x[:d], d) == x[d:]``
    exactly.
    """
    if d == 0:
        return list(diffs)
    if len(anchors) < d:
        raise ArimaError(f"need {d} anchor values, got {len(anchors)}")
    # reconstruct one differencing level at a time, innermost first
    level_tails: list[list[float]] = [list(anchors)[-d:]]
    for k in range(1, d):
        prev = level_tails[-1]
        level_tails.append([b - a for a, b in zip(prev, prev[1:])])
    out = list(diffs)
    for k in range(d - 1, -1, -1):
        anchor = level_tails[k][-1]
        rebuilt = []
        cur = anchor
        for v in out:
            cur = cur + v
            rebuilt.append(cur)
        out = rebuilt
    return out


# ---------------------------------------------------------------------------
# state-space innovations filter
#
# Harvey ARMA form with r = max(p, q + 1) states: y_t = alpha_t[0];
# alpha_{t+1} = T alpha_t + R eps_{t+1}, T first column (phi padded), ones on
# the superdiagonal, R = (1, theta_1, ..., theta_{r-1}).  The filter runs at
# unit innovation variance; the scale concentrates out exactly.  Gains
# depend only on P, so several observation columns can share one pass (used
# to whiten the regression columns for the concentrated GLS step).


def _stationary_p0(T: np.ndarray, R: np.ndarray) -> np.ndarray | None:
    r = T.shape[0]
    eye = np.eye(r * r)
    try:
        vec = np.linalg.solve(eye - np.kron(T, T), np.outer(R, R).ravel())
    except np.linalg.LinAlgError:
        return None
    P0 = vec.reshape(r, r)
    if not np.all(np.isfinite(P0)):
        return None
    return 0.5 * (P0 + P0.T)


def _filter_columns_ar1(cols: np.ndarray, ph: float):
    """Closed-form innovations for a pure AR(1)/white-noise state.

    With one state the covariance recursion collapses after the first step:
    f = (1/(1-ph^2), 1, 1, ...) and the innovations are y_t - ph*y_{t-1}.
    """
    if abs(ph) >= 1.0:
        return None
    n = cols.shape[0]
    p0 = 1.0 / (1.0 - ph * ph)
    f = np.ones(n)
    f[0] = p0
    V = np.empty_like(cols)
    V[0] = cols[0]
    if n > 1:
        V[1:] = cols[1:] - ph * cols[:-1]
    a_end = (ph * cols[-1])[None, :]
    return f, V, a_end, np.array([[1.0]])


def _filter_columns_r2(cols: np.ndarray, phi2: tuple[float, float], th1: float):
    """Scalar-unrolled innovations pass for two-state models (MA(1),
    ARMA(1,1), AR(2), ARMA(2,1))."""
    ph0, ph1 = phi2
    A = np.array(
        [
            [1.0 - ph0 * ph0, -2.0 * ph0, -1.0],
            [-ph0 * ph1, 1.0 - ph1, 0.0],
            [-ph1 * ph1, 0.0, 1.0],
        ]
    )
    b = np.array([1.0, th1, th1 * th1])
    try:
        p00, p01, p11 = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        return None
    if not (math.isfinite(p00) and math.isfinite(p01) and math.isfinite(p11)) or p00 <= 0:
        return None
    n, k = cols.shape
    rows = cols.tolist()
    f = [0.0] * n
    V = [[0.0] * k for _ in range(n)]
    a = [[0.0, 0.0] for _ in range(k)]
    steady = False
    ft = K0 = K1 = 0.0
    th1sq = th1 * th1
    for t in range(n):
        if not steady:
            ft = p00
            if not math.isfinite(ft) or ft <= 1e-300:
                return None
            K0 = ph0 + p01 / p00
            K1 = ph1
            tp0 = ph0 * p00 + p01
            m00 = ph0 * tp0 + ph0 * p01 + p11
            m01 = ph1 * tp0
            m11 = ph1 * ph1 * p00
            n00 = m00 + 1.0 - K0 * K0 * ft
            n01 = m01 + th1 - K0 * K1 * ft
            n11 = m11 + th1sq - K1 * K1 * ft
            delta = max(abs(n00 - p00), abs(n01 - p01), abs(n11 - p11))
            p00, p01, p11 = n00, n01, n11
            if delta < 1e-12:
                steady = True
        f[t] = ft
        row = rows[t]
        vt = V[t]
        for c in range(k):
            ac = a[c]
            a0 = ac[0]
            v = row[c] - a0
            vt[c] = v
            ac[0] = ph0 * a0 + ac[1] + K0 * v
            ac[1] = ph1 * a0 + K1 * v
    a_end = np.asarray(a, dtype=float).T
    P_end = np.array([[p00, p01], [p01, p11]])
    return np.asarray(f), np.asarray(V), a_end, P_end


def _filter_columns_r3(
    cols: np.ndarray, phi3: tuple[float, float, float], theta2: tuple[float, float]
):
    """Scalar-unrolled innovations pass for three-state models."""
    ph0, ph1, ph2 = phi3
    th1, th2 = theta2
    T = np.array([[ph0, 1.0, 0.0], [ph1, 0.0, 1.0], [ph2, 0.0, 0.0]])
    Rv = np.array([1.0, th1, th2])
    P0 = _stationary_p0(T, Rv)
    if P0 is None:
        return None
    p00, p01, p02 = float(P0[0, 0]), float(P0[0, 1]), float(P0[0, 2])
    p11, p12, p22 = float(P0[1, 1]), float(P0[1, 2]), float(P0[2, 2])
    if not math.isfinite(p00) or p00 <= 0:
        return None
    n, k = cols.shape
    rows = cols.tolist()
    f = [0.0] * n
    V = [[0.0] * k for _ in range(n)]
    a = [[0.0, 0.0, 0.0] for _ in range(k)]
    steady = False
    ft = K0 = K1 = K2 = 0.0
    for t in range(n):
        if not steady:
            ft = p00
            if not math.isfinite(ft) or ft <= 1e-300:
                return None
            tp00 = ph0 * p00 + p01
            tp01 = ph0 * p01 + p11
            tp02 = ph0 * p02 + p12
            tp10 = ph1 * p00 + p02
            tp12 = ph1 * p02 + p22
            tp20 = ph2 * p00
            K0 = tp00 / ft
            K1 = tp10 / ft
            K2 = tp20 / ft
            n00 = tp00 * ph0 + tp01 + 1.0 - K0 * K0 * ft
            n01 = tp00 * ph1 + tp02 + th1 - K0 * K1 * ft
            n02 = tp00 * ph2 + th2 - K0 * K2 * ft
            n11 = tp10 * ph1 + tp12 + th1 * th1 - K1 * K1 * ft
            n12 = tp10 * ph2 + th1 * th2 - K1 * K2 * ft
            n22 = tp20 * ph2 + th2 * th2 - K2 * K2 * ft
            delta = max(
                abs(n00 - p00), abs(n01 - p01), abs(n02 - p02),
                abs(n11 - p11), abs(n12 - p12), abs(n22 - p22),
            )
            p00, p01, p02, p11, p12, p22 = n00, n01, n02, n11, n12, n22
            if delta < 1e-12:
                steady = True
        f[t] = ft
        row = rows[t]
        vt = V[t]
        for c in range(k):
            ac = a[c]
            a0 = ac[0]
            v = row[c] - a0
            vt[c] = v
            ac[0] = ph0 * a0 + ac[1] + K0 * v
            ac[1] = ph1 * a0 + ac[2] + K1 * v
            ac[2] = ph2 * a0 + K2 * v
    a_end = np.asarray(a, dtype=float).T
    P_end = np.array([[p00, p01, p02], [p01, p11, p12], [p02, p12, p22]])
    return np.asarray(f), np.asarray(V), a_end, P_end


def _filter_columns(
    cols: np.ndarray, phi: Sequence[float], theta: Sequence[float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None:
    """Innovations pass over one or more observation columns.

    Returns (f, V, a_end, P_end) where f[t] is the scale-free innovation
    variance, V[t, j] the raw innovation of column j, and a_end the end
    state (per column) for forecasting.  None signals a numerically
    inadmissible parameter point.

    The loop exploits the companion structure of the transition matrix
    ((T x)_i = phi_{i+1} x_0 + x_{i+1}) and freezes the gain once the state
    covariance reaches its steady state, which keeps refits on the small
    windows of an expanding backtest cheap.
    """
    n, k = cols.shape
    p, q = len(phi), len(theta)
    r = max(p, q + 1)
    if r == 1:
        return _filter_columns_ar1(cols, phi[0] if p else 0.0)
    if r == 2:
        return _filter_columns_r2(
            cols,
            (phi[0] if p >= 1 else 0.0, phi[1] if p >= 2 else 0.0),
            theta[0] if q else 0.0,
        )
    if r == 3:
        return _filter_columns_r3(
            cols,
            tuple(list(phi) + [0.0] * (3 - p)),
            tuple(list(theta) + [0.0] * (2 - q)),
        )
    ph = list(phi) + [0.0] * (r - p)
    Rv = [1.0] + list(theta) + [0.0] * (r - 1 - q)
    T = np.zeros((r, r))
    for i in range(r):
        T[i, 0] = ph[i]
        if i + 1 < r:
            T[i, i + 1] = 1.0
    P0 = _stationary_p0(T, np.asarray(Rv))
    if P0 is None:
        return None
    P = [[float(P0[i, j]) for j in range(r)] for i in range(r)]
    RRt = [[Rv[i] * Rv[j] for j in range(r)] for i in range(r)]
    rows = cols.tolist()
    a = [[0.0] * r for _ in range(k)]
    f = [0.0] * n
    V = [[0.0] * k for _ in range(n)]
    steady = False
    K = [0.0] * r
    ft = 0.0
    rng_r = range(r)
    for t in range(n):
        if not steady:
            ft = P[0][0]
            if not math.isfinite(ft) or ft <= 1e-300:
                return None
            K = [
                (ph[i] * ft + (P[i + 1][0] if i + 1 < r else 0.0)) / ft for i in rng_r
            ]
            TP = [
                [ph[i] * P[0][j] + (P[i + 1][j] if i + 1 < r else 0.0) for j in rng_r]
                for i in rng_r
            ]
            newP = [
                [
                    TP[i][0] * ph[j]
                    + (TP[i][j + 1] if j + 1 < r else 0.0)
                    + RRt[i][j]
                    - K[i] * K[j] * ft
                    for j in rng_r
                ]
                for i in rng_r
            ]
            delta = max(
                abs(newP[i][j] - P[i][j]) for i in rng_r for j in rng_r
            )
            P = [[0.5 * (newP[i][j] + newP[j][i]) for j in rng_r] for i in rng_r]
            if delta < 1e-13:
                steady = True
        f[t] = ft
        row = rows[t]
        vt = V[t]
        for c in range(k):
            ac = a[c]
            a0 = ac[0]
            v = row[c] - a0
            vt[c] = v
            for i in rng_r:
                ac[i] = ph[i] * a0 + (ac[i + 1] if i + 1 < r else 0.0) + K[i] * v
    a_end = np.asarray(a, dtype=float).T  # (r, k)
    return np.asarray(f), np.asarray(V), a_end, np.asarray(P)


def _concentrated_loglik(
    cols: np.ndarray, phi: Sequence[float], theta: Sequence[float]
) -> tuple[float, np.ndarray, float, np.ndarray] | None:
    """Profile log-likelihood with (c, beta) and sigma2 concentrated out.

    ``cols`` stacks the differenced target first, regression columns after.
    Returns (loglik, b, sigma2, std_innovations) or None when the point is
    inadmissible.
    """
    n = cols.shape[0]
    X = cols[:, 1:]
    res = _filter_columns(cols, phi, theta)
    if res is None:
        return None
    f, V, _, _ = res
    sq = np.sqrt(f)
    ew = V[:, 0] / sq
    if X.shape[1]:
        EX = V[:, 1:] / sq[:, None]
        G = EX.T @ EX
        try:
            b = np.linalg.solve(G, EX.T @ ew)
        except np.linalg.LinAlgError:
            b, *_ = np.linalg.lstsq(EX, ew, rcond=None)
        resid = ew - EX @ b
    else:
        b = np.empty(0)
        resid = ew
    sigma2 = float(resid @ resid) / n
    if not math.isfinite(sigma2):
        return None
    sigma2 = max(sigma2, 1e-300)
    loglik = -0.5 * (n * (_LOG_2PI + 1.0 + math.log(sigma2)) + float(np.log(f).sum()))
    if not math.isfinite(loglik):
        return None
    return loglik, b, sigma2, resid / math.sqrt(sigma2)


# ---------------------------------------------------------------------------
# public operations


def persistence_forecast(
    history, horizon: int = 1, quantile_levels: Sequence[float] = ()
) -> QuantileForecast:
    """Carry the last observed level forward over every horizon step.

    Requested quantiles all equal the point value: persistence asserts a
    degenerate predictive distribution.
    """
    vals = _values(history)
    if horizon < 1:
        raise ArimaError("horizon must be >= 1")
    last = float(vals[-1])
    q = {float(lv): last for lv in quantile_levels}
    return QuantileForecast(steps=tuple(StepForecast(last, dict(q)) for _ in range(horizon)))


def arima_loglik(params, data, exog=None) -> float:
    """Exact Gaussian log-likelihood at fully specified parameters.

    ``params`` needs order, c, phi, theta, beta, sigma2 (an
    :class:`ArimaFit` works).  The series is differenced per the order, the
    regression part is subtracted, and the ARMA likelihood is evaluated by
    the innovations recursion -- deterministic, no approximations.
    """
    y = _values(data)
    order: ArimaOrder = params.order
    X_full = _exog_matrix(exog, y.shape[0])
    if X_full.shape[1] != len(params.beta):
        raise ArimaError(
            f"exogenous column count {X_full.shape[1]} != len(beta) {len(params.beta)}"
        )
    w = np.asarray(difference(y, order.d))
    X = np.asarray([difference(X_full[:, j], order.d) for j in range(X_full.shape[1])]).T
    if X.size == 0:
        X = np.empty((w.shape[0], 0))
    u = w - params.c
    if X.shape[1]:
        u = u - X @ np.asarray(params.beta)
    res = _filter_columns(u[:, None], list(params.phi), list(params.theta))
    if res is None:
        raise ArimaError("likelihood overflow: parameters outside the admissible region")
    f, V, _, _ = res
    n = u.shape[0]
    s2 = params.sigma2
    loglik = -0.5 * float(
        n * (_LOG_2PI + math.log(s2)) + np.log(f).sum() + (V[:, 0] ** 2 / f).sum() / s2
    )
    if not math.isfinite(loglik):
        raise ArimaError("likelihood overflow")
    return loglik


def arima_fit(
    data,
    order: ArimaOrder,
    exog=None,
    include_constant: bool | None = None,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> ArimaFit:
    """Exact maximum-likelihood fit of a non-seasonal ARIMA(p, d, q) model.

    The optimiser is a derivative-free simplex started from zero on the
    transformed (partial-autocorrelation) scale, so refits on identical data
    are bit-reproducible.  ``include_constant`` defaults to d == 0;
    differenced models are driftless unless asked otherwise.
    """
    y = _values(data)
    X_full = _exog_matrix(exog, y.shape[0])
    k = X_full.shape[1]
    if include_constant is None:
        include_constant = order.d == 0
    min_len = order.p + order.q + order.d + k + 3
    if y.shape[0] < min_len:
        raise ArimaError(
            f"training length {y.shape[0]} below minimum {min_len} for order "
            f"({order.p},{order.d},{order.q}) with {k} regressors"
        )
    w = np.asarray(difference(y, order.d), dtype=float)
    Xcols = [np.asarray(difference(X_full[:, j], order.d), dtype=float) for j in range(k)]
    X = np.column_stack(Xcols) if Xcols else np.empty((w.shape[0], 0))
    if include_constant:
        X = np.column_stack([np.ones(w.shape[0]), X])
    if X.shape[1]:
        if X.shape[0] <= X.shape[1]:
            raise ArimaError("collinear exogenous: more regressors than observations")
        sv = np.linalg.svd(X - (X.mean(axis=0) if not include_constant else 0.0), compute_uv=False)
        if sv[-1] < 1e-10 * max(sv[0], 1.0):
            raise ArimaError("collinear exogenous design")

    p, q = order.p, order.q
    cols = np.column_stack([w, X]) if X.shape[1] else w[:, None]

    def objective(z: np.ndarray) -> float:
        phi, theta = _transform_params(z, p, q)
        out = _concentrated_loglik(cols, phi, theta)
        if out is None:
            return _BIG
        return -out[0]

    if p + q == 0:
        z_opt = np.empty(0)
    else:
        res = optimize.minimize(
            objective,
            np.zeros(p + q),
            method="Nelder-Mead",
            options={"maxiter": max_iter, "fatol": tol, "xatol": tol},
        )
        if not np.isfinite(res.fun) or res.fun >= _BIG:
            raise ArimaError("fit failed: optimiser did not reach an admissible point")
        z_opt = res.x
    phi, theta = _transform_params(z_opt, p, q)
    out = _concentrated_loglik(cols, phi, theta)
    if out is None:
        raise ArimaError("fit failed: likelihood not finite at the optimum")
    loglik, b, sigma2, _ = out
    sigma2 = max(sigma2, 1e-12 * (1.0 + float(np.mean(w * w))))
    if include_constant:
        c = float(b[0])
        beta = tuple(float(v) for v in b[1:])
    else:
        c = 0.0
        beta = tuple(float(v) for v in b)
    n = w.shape[0]
    n_params = p + q + len(b) + 1  # + concentrated innovation variance
    if n - n_params - 1 <= 0:
        raise ArimaError("fit failed: too few observations for the AICc correction")
    aicc = -2.0 * loglik + 2.0 * n_params + 2.0 * n_params * (n_params + 1) / (n - n_params - 1)
    return ArimaFit(
        order=order,
        c=c,
        phi=tuple(float(v) for v in phi),
        theta=tuple(float(v) for v in theta),
        beta=beta,
        sigma2=float(sigma2),
        loglik=float(loglik),
        aicc=float(aicc),
        n_obs=int(n),
        include_constant=include_constant,
    )


def default_order_grid() -> tuple[ArimaOrder, ...]:
    return tuple(
        ArimaOrder(p, d, q) for d in (0, 1) for p in (0, 1, 2) for q in (0, 1, 2)
    )


def arima_order_select(
    data, exog=None, grid: Sequence[ArimaOrder] | None = None
) -> ArimaOrder:
    """Smallest-AICc order over the grid, ties to the simpler model.

    Orders whose fits fail are skipped; if everything fails there is no
    admissible order.
    """
    grid = tuple(grid) if grid is not None else default_order_grid()
    if not grid:
        raise ArimaError("empty order grid")
    best: tuple[float, int, int, int, int] | None = None
    best_order: ArimaOrder | None = None
    for order in grid:
        try:
            fit = arima_fit(data, order, exog=exog)
        except ArimaError:
            continue
        n_params = order.p + order.q + len(fit.beta) + (1 if fit.include_constant else 0)
        key = (fit.aicc, n_params, order.p, order.q, order.d)
        if best is None or key < best:
            best = key
            best_order = order
    if best_order is None:
        raise ArimaError("no admissible order: every candidate fit failed")
    return best_order


def _psi_weights(phi: Sequence[float], theta: Sequence[float], d: int, horizon: int) -> list[float]:
    """MA representation weights of the integrated process, psi_0 = 1."""
    ar_poly = [1.0] + [-p for p in phi]
    for _ in range(d):
        # multiply by (1 - B)
        nxt = [0.0] * (len(ar_poly) + 1)
        for i, cde in enumerate(ar_poly):
            nxt[i] += cde
            nxt[i + 1] -= cde
        ar_poly = nxt
    a = [-cde for cde in ar_poly[1:]]  # y_t = sum a_i y_{t-i} + ...
    psi = [1.0]
    for j in range(1, horizon):
        acc = theta[j - 1] if j - 1 < len(theta) else 0.0
        for i in range(1, min(j, len(a)) + 1):
            acc += a[i - 1] * psi[j - i]
        psi.append(acc)
    return psi


def arima_forecast(
    fit: ArimaFit,
    data,
    exog_history=None,
    horizon: int = 1,
    levels: Sequence[float] = (0.8, 0.95),
    quantile_levels: Sequence[float] = (),
) -> ArimaForecast:
    """Recursive multi-step forecasts with Gaussian uncertainty.

    Point forecasts iterate the state-space conditional mean from the end of
    the filtered training data; the error variance at step h accumulates the
    squared MA-representation weights, so interval width never shrinks with
    horizon.  Future exogenous values are held at their last observed row.
    """
    if horizon < 1:
        raise ArimaError("horizon must be >= 1")
    y = _values(data)
    order = fit.order
    X_full = _exog_matrix(exog_history, y.shape[0])
    if X_full.shape[1] != len(fit.beta):
        raise ArimaError("exogenous history does not match the fitted beta size")
    w = np.asarray(difference(y, order.d), dtype=float)
    X = (
        np.asarray([difference(X_full[:, j], order.d) for j in range(X_full.shape[1])]).T
        if X_full.shape[1]
        else np.empty((w.shape[0], 0))
    )
    u = w - fit.c
    if X.shape[1]:
        u = u - X @ np.asarray(fit.beta)
    res = _filter_columns(u[:, None], list(fit.phi), list(fit.theta))
    if res is None:
        raise ArimaError("forecast failed: parameters inadmissible")
    _, _, a_end, _ = res
    r = a_end.shape[0]
    T = np.zeros((r, r))
    for i, ph in enumerate(fit.phi):
        T[i, 0] = ph
    for i in range(r - 1):
        T[i, i + 1] = 1.0
    # mean forecasts on the differenced scale
    a = a_end[:, 0].copy()
    w_hat = []
    if order.d > 0:
        future_reg = np.zeros(len(fit.beta))  # held-constant exog has zero differences
    else:
        future_reg = X_full[-1] if len(fit.beta) else np.zeros(0)
    for _ in range(horizon):
        u_hat = float(a[0])
        reg = float(future_reg @ np.asarray(fit.beta)) if len(fit.beta) else 0.0
        w_hat.append(fit.c + reg + u_hat)
        a = T @ a
    points = undifference(w_hat, list(y[-order.d :]) if order.d else [], order.d)
    psi = _psi_weights(fit.phi, fit.theta, order.d, horizon)
    sd = [math.sqrt(fit.sigma2 * sum(ps * ps for ps in psi[: h + 1])) for h in range(horizon)]
    steps = []
    for h in range(horizon):
        intervals = []
        for lv in levels:
            z = float(stats.norm.ppf(0.5 + lv / 2.0))
            half = z * sd[h]
            intervals.append(PredictionInterval(level=float(lv), lower=points[h] - half, upper=points[h] + half))
        q = gaussian_quantiles(points[h], sd[h], quantile_levels) if quantile_levels else {}
        steps.append(
            ArimaForecastStep(
                point=float(points[h]), error_sd=float(sd[h]),
                intervals=tuple(intervals), quantiles=q,
            )
        )
    return ArimaForecast(steps=tuple(steps))


def residual_diagnostics(fit: ArimaFit, data, exog=None) -> ResidualReport:
    """Standardized innovations with portmanteau whiteness and normality.

    The whiteness statistic pools autocorrelations over lags 1..min(8, n/4)
    with degrees of freedom reduced by the fitted ARMA order; an all-zero
    residual vector short-circuits to a degenerate report.
    """
    y = _values(data)
    order = fit.order
    X_full = _exog_matrix(exog, y.shape[0])
    w = np.asarray(difference(y, order.d), dtype=float)
    X = (
        np.asarray([difference(X_full[:, j], order.d) for j in range(X_full.shape[1])]).T
        if X_full.shape[1]
        else np.empty((w.shape[0], 0))
    )
    u = w - fit.c
    if X.shape[1]:
        u = u - X @ np.asarray(fit.beta)
    res = _filter_columns(u[:, None], list(fit.phi), list(fit.theta))
    if res is None:
        raise ArimaError("diagnostics failed: parameters inadmissible")
    f, V, _, _ = res
    e = V[:, 0] / np.sqrt(f * fit.sigma2)
    n = e.shape[0]
    if float(np.max(np.abs(e))) < 1e-12:
        return ResidualReport(
            std_residuals=tuple(float(v) for v in e), lags=0,
            lb_stat=None, lb_pvalue=None, normality_pvalue=None, degenerate=True,
        )
    lags = max(1, min(8, n // 4))
    e_c = e - e.mean()
    denom = float(e_c @ e_c)
    lb = 0.0
    for kk in range(1, lags + 1):
        rk = float(e_c[kk:] @ e_c[:-kk]) / denom
        lb += rk * rk / (n - kk)
    lb *= n * (n + 2)
    dof = max(1, lags - fit.order.p - fit.order.q)
    lb_p = float(stats.chi2.sf(lb, dof))
    jb_p = float(stats.jarque_bera(e).pvalue) if n >= 8 else None
    return ResidualReport(
        std_residuals=tuple(float(v) for v in e), lags=lags,
        lb_stat=float(lb), lb_pvalue=lb_p, normality_pvalue=jb_p, degenerate=False,
    )
