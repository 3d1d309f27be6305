"""Reference implementation of the forecaster wire protocol.

``python -m enrolcast.stub_adapter`` serves deterministic persistence
forecasts over stdin/stdout, which is enough to exercise every engine-side
code path without any model dependency.  The fault modes exist for the
test suite's fault-injection harness.
"""

from __future__ import annotations

import argparse
import json
import sys
import time


def _respond(doc: dict) -> None:
    sys.stdout.write(json.dumps(doc) + "\n")
    sys.stdout.flush()


def handle_request(doc: dict, mode: str) -> dict:
    history = doc["target_history"]
    horizon = int(doc.get("horizon", 1))
    levels = [float(v) for v in doc.get("quantile_levels", [])]
    if mode == "echo":
        base = float(horizon)
        step = {"point": base, "quantiles": {repr(lv): base + lv for lv in levels}}
    else:
        last = float(history[-1][1])
        step = {"point": last, "quantiles": {repr(lv): last for lv in levels}}
    return {"request_id": doc.get("request_id"), "steps": [dict(step) for _ in range(horizon)]}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="stub forecaster adapter")
    parser.add_argument(
        "--mode",
        default="persistence",
        choices=["persistence", "echo", "hang", "malformed", "crash"],
    )
    parser.add_argument("--name", default="stub-persistence")
    parser.add_argument("--delay", type=float, default=0.0, help="seconds to sleep per request")
    args = parser.parse_args(argv)

    _respond(
        {
            "protocol": "enrolcast-adapter/1",
            "name": args.name,
            "supports_covariates": False,
        }
    )
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            _respond({"request_id": None, "error": {"type": "protocol", "message": "bad json"}})
            continue
        if args.delay:
            time.sleep(args.delay)
        if args.mode == "hang":
            time.sleep(3600)
        if args.mode == "crash":
            return 1
        if args.mode == "malformed":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        try:
            _respond(handle_request(doc, args.mode))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            _respond(
                {
                    "request_id": doc.get("request_id"),
                    "error": {"type": "inference-failure", "message": str(exc)},
                }
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
