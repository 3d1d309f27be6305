"""The external forecaster wire protocol, end to end.

Spawns the stub adapter as a child process, performs the handshake, sends
requests over newline-delimited JSON, and shows the engine-side validation
(quantile repair, timeouts) that every external model goes through.
"""

import sys

from enrolcast.adapters import (
    AdapterDescriptor,
    AdapterTimeout,
    ChildProcessAdapter,
    ForecastRequest,
    forecast,
    request_to_wire,
)
from enrolcast.quantiles import repair_quantiles

STUB = f"{sys.executable} -m enrolcast.stub_adapter"

request = ForecastRequest(
    request_id="demo-1",
    series_id="domestic",
    target_history=tuple((2007 + i, 4000.0 + 120.0 * i) for i in range(12)),
    covariate_history={"stress": tuple((2007 + i, float(20 + i)) for i in range(12))},
    horizon=2,
    quantile_levels=(0.1, 0.5, 0.9),
)

print("== the request on the wire")
print(request_to_wire(request)[:120] + " ...\n")

print("== a protocol session against the stub persistence server")
adapter = ChildProcessAdapter(
    AdapterDescriptor(
        name="stub", transport="child-process", command=f"{STUB} --mode persistence",
        timeout_seconds=30,
    )
)
try:
    reply = forecast(adapter, request)
    print(f"  handshake said supports_covariates={adapter.supports_covariates}")
    for h, step in enumerate(reply.steps, start=1):
        print(f"  h={h}: point {step.point}, quantiles {step.quantiles}")
finally:
    adapter.close()

print("\n== quantile repair: tiny inversions fixed, gross ones refused")
messy = {0.1: 4500.0, 0.5: 4499.9999, 0.9: 5200.0}
print(f"  {messy} -> {repair_quantiles(messy, tolerance=1e-2)}")
try:
    repair_quantiles({0.1: 5200.0, 0.9: 4500.0})
except Exception as exc:
    print(f"  gross crossing: {exc}")

print("\n== a hanging adapter hits the configured deadline")
slow = ChildProcessAdapter(
    AdapterDescriptor(
        name="hang", transport="child-process", command=f"{STUB} --mode hang",
        timeout_seconds=2,
    )
)
try:
    forecast(slow, request)
except AdapterTimeout as exc:
    print(f"  {exc}")
finally:
    slow.close()
