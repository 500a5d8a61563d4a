"""Command line client: reads the config, sends it to the service and maps the reply to an exit code."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .runner import EXIT_ERROR

SUBCOMMANDS = {
    "simulate": None,
    "verify": ["verify-structure"],
    "clt": ["clt-quenched", "clt-annealed"],
    "functional": ["functional"],
    "gh": ["gh-check"],
    "coboundary": ["coboundary"],
    "explore": ["counterexample"],
    "conditions": ["check-conditions"],
}
HELP = {
    "simulate": "write one field realization on the first configured window",
    "verify": "exact orthomartingale and commuting checks",
    "clt": "quenched or annealed CLT experiment",
    "functional": "finite-dimensional laws of the partial-sum sheet",
    "gh": "row-martingale array conditions",
    "coboundary": "coboundary residual decay",
    "explore": "heavy-level exceedance probe",
    "conditions": "sufficient-condition scans (lin, volt, con1)",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orthofield", description="Orthomartingale field experiments.")
    p.add_argument("--server", help="base URL of a running service (default: in-process)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("--config", required=True, type=Path, help="run configuration (YAML)")
        s.add_argument("--out", type=Path, help="output directory")
        s.add_argument("--threads", type=int, help="worker threads (ORTHOFIELD_THREADS takes precedence)")
        s.add_argument("--seed", type=int, help="base seed")
        s.add_argument("--format", choices=("csv", "json"))
    return p


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=None)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # starlette deprecation notice about its httpx backend
        from fastapi.testclient import TestClient

    from .service import app

    return TestClient(app)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    logging.getLogger("httpx").setLevel(logging.WARNING)
    try:
        text = args.config.read_text()
    except OSError as e:
        print(f"error: cannot read {args.config}: {e}", file=sys.stderr)
        return EXIT_ERROR
    body = {
        "config": text,
        "base_dir": str(args.config.resolve().parent),
        "source": str(args.config),
        "overrides": {"out": str(args.out.resolve()) if args.out else None, "threads": args.threads,
                      "seed": args.seed, "format": args.format},
        "expect_kinds": SUBCOMMANDS[args.command],
    }
    route = "/simulate" if args.command == "simulate" else "/run"
    try:
        with _client(args.server) as client:
            resp = client.post(route, json=body)
    except Exception as e:  # transport failures only; experiment errors come back in the body
        print(f"error: service unreachable: {e}", file=sys.stderr)
        return EXIT_ERROR
    if resp.status_code != 200:
        print(f"error: service returned {resp.status_code}: {resp.text}", file=sys.stderr)
        return EXIT_ERROR
    reply = resp.json()
    if reply.get("error"):
        print(f"error: {reply['error']}", file=sys.stderr)
    else:
        summary = reply.get("summary", {})
        verdict = summary.get("verdict", "done")
        print(f"{summary.get('kind', args.command)}: {verdict}")
        for f in reply.get("files", []):
            print(f"  {f}")
        if args.verbose:
            print(json.dumps(summary, indent=2, default=str))
    return int(reply["exit_code"])


if __name__ == "__main__":
    sys.exit(main())
