"""Command-line entry point: ``fractalids <stage> --config cfg.json --out dir``.

Exit codes: 0 success, 1 config error, 2 numerical failure, 3 verification
or fit failure (including a missing good labeling).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import (
    ConfigError,
    EmptyWindow,
    FractalIDSError,
    NoGLP,
    NonpositiveIDS,
    VerificationFailed,
)
from .labeling import certificate_json
from .runner import STAGES, Pipeline, load_config

log = logging.getLogger("fractalids")

# each stage also runs the stages it depends on
UPSTREAM = {
    "fractal": ("fractal",),
    "label": ("fractal", "label"),
    "spectrum": ("fractal", "label", "spectrum"),
    "ids": ("fractal", "label", "ids"),
    "fit": ("fractal", "label", "fit"),
    "verify": ("fractal", "label", "verify"),
}


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="fractalids", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON experiment document; defaults apply when omitted")
        sp.add_argument("--out", help="output root (overrides the config)")
        sp.add_argument("--threads", type=_positive, help="worker threads for sample tasks")
        sp.add_argument("--seed", type=_seed, help="master seed (overrides the config)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    p = None
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads, out=args.out)
        p = Pipeline(cfg)
        for stage in UPSTREAM[args.command]:
            STAGES[stage](p)
        print(p.root)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NoGLP as exc:
        p.writer.write("geometry/noglp_certificate.json", certificate_json(exc) + "\n")
        print(f"no good labeling: {json.dumps(exc.certificate, sort_keys=True)}", file=sys.stderr)
        return 3
    except (VerificationFailed, EmptyWindow, NonpositiveIDS) as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 3
    except FractalIDSError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    finally:
        if p is not None:
            p.write_manifest()


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
