import argparse

from .server import serve
from .spec import FAMILIES, BridgeError, BridgeModelSpec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="enrolcast-bridge",
        description="Serve one forecasting model over the adapter wire protocol",
    )
    parser.add_argument("--family", required=True, choices=FAMILIES)
    parser.add_argument("--size", default="", help="preset, e.g. tiny/small/base/200m")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--covariate-mode", default="", dest="covariate_mode",
                        choices=["", "native", "residual-linear", "none"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sample-paths", type=int, default=256, dest="sample_paths")
    args = parser.parse_args(argv)
    try:
        spec = BridgeModelSpec(
            family=args.family,
            size=args.size,
            device=args.device,
            covariate_mode=args.covariate_mode,
            seed=args.seed,
            sample_paths=args.sample_paths,
        )
    except BridgeError as exc:
        parser.error(str(exc))
    return serve(spec)


if __name__ == "__main__":
    raise SystemExit(main())
