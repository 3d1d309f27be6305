"""The request loop: handshake, then one JSON reply per JSON line.

Conformance rules: the server never crashes on malformed traffic (every
defect becomes an error reply and the session stays alive), quantiles are
monotonized before leaving the process, and identical requests produce
identical replies for deterministic settings.
"""

from __future__ import annotations

import json
import sys

from .models import load_model
from .spec import BridgeError, BridgeModelSpec

PROTOCOL_VERSION = "enrolcast-adapter/1"


def _emit(stream, doc: dict) -> None:
    stream.write(json.dumps(doc) + "\n")
    stream.flush()


def _monotonize(levels, quantiles: dict) -> dict:
    """Running-max repair so replies never carry crossing quantiles."""
    out = {}
    prev = None
    for lv in sorted(levels):
        v = float(quantiles[lv])
        if prev is not None and v < prev:
            v = prev
        out[lv] = v
        prev = v
    return out


def handle_request(model, doc: dict) -> dict:
    request_id = doc.get("request_id") if isinstance(doc, dict) else None
    try:
        if not isinstance(doc, dict):
            raise ValueError("request is not an object")
        history = doc["target_history"]
        if not isinstance(history, list) or not history:
            raise ValueError("target_history must be a non-empty list")
        history = [(int(y), float(v)) for y, v in history]
        horizon = int(doc.get("horizon", 1))
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        levels = [float(lv) for lv in doc.get("quantile_levels", [])]
        if any(not 0.0 < lv < 1.0 for lv in levels):
            raise ValueError("quantile levels must lie in (0, 1)")
        covariates = {
            str(name): [(int(y), float(v)) for y, v in pairs]
            for name, pairs in (doc.get("covariate_history") or {}).items()
        }
        steps = model.predict(history, covariates, horizon, levels)
        wire_steps = []
        for s in steps:
            qs = _monotonize(levels, s["quantiles"]) if levels else {}
            wire_steps.append(
                {"point": float(s["point"]), "quantiles": {repr(lv): qs[lv] for lv in qs}}
            )
        return {"request_id": request_id, "steps": wire_steps}
    except Exception as exc:  # malformed frames must never kill the session
        return {
            "request_id": request_id,
            "error": {"type": "inference-failure", "message": str(exc)},
        }


def serve(spec: BridgeModelSpec, stdin=None, stdout=None) -> int:
    """Load the model, handshake, and loop until stdin closes.

    A load failure emits an error handshake line and returns nonzero; after
    a successful handshake this function only exits on EOF.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    try:
        model = load_model(spec)
    except BridgeError as exc:
        _emit(stdout, {"protocol": PROTOCOL_VERSION, "error": {"type": "load-failure",
                                                               "message": str(exc)}})
        return 1
    _emit(
        stdout,
        {
            "protocol": PROTOCOL_VERSION,
            "name": spec.name,
            "supports_covariates": spec.supports_covariates,
            "covariate_mode": spec.covariate_mode,
            "sample_paths": spec.sample_paths,
            "seed": spec.seed,
        },
    )
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            _emit(stdout, {"request_id": None,
                           "error": {"type": "protocol", "message": f"bad json: {exc}"}})
            continue
        _emit(stdout, handle_request(model, doc))
    return 0
