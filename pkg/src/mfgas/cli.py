"""Command line interface.

Exit codes: 0 success, 1 validation error, 2 numerical non-convergence,
3 statistical test failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, validate
from .equilibrium import NonConvergenceError
from .pipeline import (
    StageError, StatisticalFailure, load_samples, run_pipeline, stage_equilibrium, stage_sample,
    stage_stats,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_STATS = 0, 1, 2, 3

# flag name -> config key
_MODEL_FLAGS = {
    "kernel": "kernel.family",
    "n": "kernel.n",
    "s": "kernel.s",
    "potential": "potential.family",
    "alpha": "potential.alpha",
    "gamma": "gamma",
    "beta_override": "beta.override",
}
_SAMPLE_FLAGS = {
    "N": "sample.N",
    "replicas": "sample.replicas",
    "frames": "sample.frames",
    "burn_in": "sample.burn_in",
    "thin": "sample.thin",
    "sampler": "sample.sampler",
    "keep": "sample.keep",
}


def _add_model(p):
    p.add_argument("--kernel", choices=["log", "riesz"])
    p.add_argument("--n", type=int, help="dimension (1 or 2)")
    p.add_argument("--s", type=float, help="Riesz exponent")
    p.add_argument("--potential", choices=["power", "gaussian", "tabulated"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta-override", type=float, dest="beta_override",
                   help="use this beta instead of gamma/N")
    p.add_argument("--grid-points", "--grid-size", type=int, dest="grid_size")
    p.add_argument("--domain", type=float, help="half-width (or radius) of the equilibrium grid")
    p.add_argument("--tol", type=float)
    p.add_argument("--damping", type=float)


def _add_sample(p):
    p.add_argument("--N", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--frames", type=int, help="recorded frames per replica")
    p.add_argument("--steps", type=int, help="total Metropolis steps (sets frames from burn-in and thin)")
    p.add_argument("--burn-in", type=int, dest="burn_in")
    p.add_argument("--thin", type=int)
    p.add_argument("--sampler", choices=["auto", "mcmc", "tridiag", "iid"])
    p.add_argument("--keep", choices=["auto", "all", "bulk", "edge", "max"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    S = argparse.SUPPRESS
    common.add_argument("--config", type=Path, default=S, help="TOML file with dotted keys")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--out-dir", type=Path, dest="out_dir", default=S)
    common.add_argument("--threads", type=int, default=S)
    common.add_argument("-v", "--verbose", action="store_true", default=S)

    ap = argparse.ArgumentParser(prog="mfgas", parents=[common], allow_abbrev=False,
                                 description="Mean-field gases: equilibrium, sampling, local statistics.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("equilibrium", parents=[common], allow_abbrev=False, help="solve for the equilibrium measure")
    _add_model(p)

    p = sub.add_parser("sample", parents=[common], allow_abbrev=False, help="draw configurations")
    _add_model(p)
    _add_sample(p)

    for name, hlp in [("bulk-stats", "Poisson tests around a bulk point"),
                      ("edge-stats", "Poisson tests in the edge frame"),
                      ("gumbel", "Gumbel test of the rescaled maximum")]:
        p = sub.add_parser(name, parents=[common], allow_abbrev=False, help=hlp)
        _add_model(p)
        p.add_argument("--N", type=int)
        p.add_argument("--samples", type=Path, help="sample directory (default OUT/samples)")
        p.add_argument("--equilibrium", type=Path, help="equilibrium JSON (default OUT/equilibrium.json)")
        p.add_argument("--level", type=float)
        if name == "bulk-stats":
            p.add_argument("--E", type=float, nargs="+")
            p.add_argument("--window", type=float, nargs=2)
            p.add_argument("--unfold", action="store_true", default=None)
        if name == "edge-stats":
            p.add_argument("--thresholds", type=float, nargs="+")
            p.add_argument("--upsilon", type=float, nargs="+")
        if name == "gumbel":
            p.add_argument("--ks-max", type=float, dest="ks_max")

    sub.add_parser("pipeline", parents=[common], allow_abbrev=False, help="run equilibrium, sample and stats from --config")
    p = sub.add_parser("validate", parents=[common], allow_abbrev=False, help="check a configuration")
    _add_model(p)
    return ap


def _config(args, extra: dict | None = None) -> ExperimentConfig:
    path = getattr(args, "config", None)
    cfg = ExperimentConfig.load(path) if path else ExperimentConfig()
    upd = {}
    for flag, key in {**_MODEL_FLAGS, **_SAMPLE_FLAGS}.items():
        v = getattr(args, flag, None)
        if v is not None:
            upd[key] = v
    for flag in ("grid_size", "domain", "tol", "damping"):
        if getattr(args, flag, None) is not None:
            upd[f"equilibrium.{flag}"] = getattr(args, flag)
    for flag, key in [("seed", "run.seed"), ("out_dir", "run.out_dir"), ("threads", "run.threads"),
                      ("level", "stats.level"), ("E", "stats.E"), ("window", "stats.window"),
                      ("unfold", "stats.unfold"), ("thresholds", "stats.thresholds"),
                      ("upsilon", "stats.upsilon"), ("ks_max", "stats.ks_max")]:
        v = getattr(args, flag, None)
        if v is not None:
            upd[key] = str(v) if flag == "out_dir" else v
    upd.update(extra or {})
    cfg = cfg.updated(**upd)
    steps = getattr(args, "steps", None)
    if steps is not None:
        N = cfg["sample.N"]
        burn = 10 * N if cfg["sample.burn_in"] < 0 else cfg["sample.burn_in"]
        thin = N if cfg["sample.thin"] < 0 else cfg["sample.thin"]
        if steps <= burn:
            raise ConfigError("--steps must exceed the burn-in")
        cfg = cfg.updated(**{"sample.frames": max((steps - burn) // thin, 1)})
    return cfg


def _check(cfg) -> list:
    findings = validate(cfg)
    for f in findings:
        print(f, file=sys.stderr)
    if any(f.level == "error" for f in findings):
        raise ConfigError("invalid configuration")
    return findings


def _load_eq(args, out: Path) -> dict:
    path = getattr(args, "equilibrium", None) or out / "equilibrium.json"
    return json.loads(Path(path).read_text())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg = _config(args)
            findings = validate(cfg)
            for f in findings:
                print(f)
            if not findings:
                print("ok")
            return EXIT_VALIDATION if any(f.level == "error" for f in findings) else EXIT_OK
        if args.command == "pipeline":
            if getattr(args, "config", None) is None:
                raise ConfigError("pipeline needs --config")
            cfg = _config(args)
            man = run_pipeline(cfg)
            print(json.dumps({"out_dir": cfg["run.out_dir"], "verdict": man.verdict,
                              "stages": {k: v["cached"] for k, v in man.stages.items()}}))
            return EXIT_OK
        kind = {"bulk-stats": "bulk", "edge-stats": "edge", "gumbel": "gumbel"}.get(args.command)
        cfg = _config(args, {"stats.kind": kind} if kind else None)
        out = Path(cfg["run.out_dir"])
        if kind:
            # the sample manifest fixes N, replicas and frames
            meta, frames = load_samples(args.samples or out / "samples")
            cfg = cfg.updated(**{"sample.N": meta["N"], "sample.replicas": meta["replicas"],
                                 "sample.frames": meta["frames"]})
        _check(cfg)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "equilibrium":
            res = stage_equilibrium(cfg, out)
            print(json.dumps(res, sort_keys=True))
            return EXIT_OK
        if args.command == "sample":
            eq = None
            if cfg["sample.keep"] == "edge":
                eq = _load_eq(args, out)
            meta = stage_sample(cfg, out, eq, threads=cfg["run.threads"])
            print(json.dumps({k: meta[k] for k in ("sampler", "keep", "N", "replicas", "frames", "betaN")}))
            return EXIT_OK
        eq = _load_eq(args, out)
        res = stage_stats(cfg, out, eq, meta, frames)
        print(json.dumps({k: res[k] for k in ("kind", "passed")}))
        return EXIT_OK if res["passed"] else EXIT_STATS
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NonConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except StatisticalFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_STATS
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
