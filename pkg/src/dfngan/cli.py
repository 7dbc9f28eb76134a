"""``dfngan`` command-line entry point.

Every subcommand accepts ``--config PATH``, ``--seed INT``, ``--out DIR`` and
any number of trailing ``key=value`` overrides, applied in that order.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import harness
from .config import load_config
from .errors import DfnGanError


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="dfngan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, aliases=()):
        p = sub.add_parser(name, parents=[common], help=help_, aliases=list(aliases))
        p.add_argument("overrides", nargs="*", metavar="key=value")
        return p

    add("make-spectrograms", "wavelet spectrograms for every clip in the manifest")
    add("train", "train the configured variants on each scale kind")
    add("eval-fid", "FID and SNR report for trained checkpoints", aliases=("eval",))
    add("eval-snr", "SNR-only report for trained checkpoints")
    add("gmm-benchmark", "mode counting on the ten-Gaussian ring")
    p = add("synth-data", "write a synthetic tone-mixture dataset and manifest")
    p.add_argument("--clips", type=int, default=500)
    p.add_argument("--duration", type=float, default=2.0)

    p = sub.add_parser("dfn", parents=[common], help="print departure from normality of matrix files")
    p.add_argument("paths", nargs="+", metavar="FILE")
    p.add_argument("--backend", choices=("schur", "lapack"), default="schur")
    return parser


def _config(args):
    values = {}
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["out"] = args.out
    return load_config(args.config, getattr(args, "overrides", ()), **values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "dfn":
            res = harness.cmd_dfn(args.paths, args.backend)
        else:
            cfg = _config(args)
            if args.command == "make-spectrograms":
                res = harness.cmd_make_spectrograms(cfg)
            elif args.command == "train":
                res = harness.cmd_train(cfg)
            elif args.command in ("eval-fid", "eval"):
                res = harness.cmd_eval(cfg)
            elif args.command == "eval-snr":
                res = harness.cmd_eval(cfg, what=("snr",))
            elif args.command == "gmm-benchmark":
                res = harness.cmd_gmm_benchmark(cfg)
            else:
                path = harness.synth_tone_dataset(cfg.out_dir, args.clips, cfg.seed, args.duration,
                                                  cfg.sample_rate)
                res = harness.CommandResult(0, {"manifest": str(path)}, [f"manifest\t{path}"])
    except (DfnGanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in res.lines:
        print(line)
    return res.code


if __name__ == "__main__":
    sys.exit(main())
