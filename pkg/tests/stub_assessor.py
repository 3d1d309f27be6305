"""Protocol-conformant stand-in for an external text-model assessor.

Echoes dimension baselines from a file instead of judging evidence, which
lets the CLI's assessor path run deterministically in CI.
"""

import argparse
import json
import sys


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--dims", required=True)
    parser.add_argument("--garble", action="store_true")
    args = parser.parse_args()
    with open(args.dims, encoding="utf-8") as fh:
        dims = json.load(fh)
    sys.stdout.write(
        json.dumps(
            {"protocol": "enrolcast-adapter/1", "name": "stub-assessor", "supports_covariates": False}
        )
        + "\n"
    )
    sys.stdout.flush()
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        if args.garble:
            sys.stdout.write(json.dumps({"request_id": req.get("request_id"), "dimensions": "oops"}) + "\n")
        else:
            wanted = {str(y): dims[str(y)] for y in req.get("years", []) if str(y) in dims}
            sys.stdout.write(
                json.dumps({"request_id": req.get("request_id"), "dimensions": wanted}) + "\n"
            )
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
