"""Run the reference server: ``python -m fm_server --port 8080
--models seasonal-naive,mean-mode-tab``."""

from __future__ import annotations

import argparse
import sys
import time

from fm_server.app import serve
from fm_server.predictors import MODEL_BUILDERS, PredictorError, default_models


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fm-server")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument(
        "--models",
        default="seasonal-naive,mean-mode-tab",
        help=f"comma-separated model names from {sorted(MODEL_BUILDERS)}",
    )
    args = parser.parse_args(argv)
    names = [n.strip() for n in args.models.split(",") if n.strip()]
    try:
        models = default_models(names)
    except PredictorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        server = serve(models, port=args.port)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return 1
    print(f"serving {', '.join(m.backend_id for m in models)} on {server.base_url}")
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
