"""Pipeline stages (equilibrium, sample, stats) with content-hash caching.

Every stage writes CSV data and a JSON summary into the output directory.
A stage is skipped when its key (config subset plus upstream output
hashes plus package version) and its output hashes match ``cache.json``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import csv
import hashlib
import json
import logging
import math
from pathlib import Path
import time
import warnings

import numpy as np

from . import __version__
from .config import ExperimentConfig, ConfigError, validate
from .equilibrium import NonConvergenceError, default_grid, line_grid, radial_grid, solve_equilibrium
from .kernels import eval_potential, partition_constant
from .pointprocess import (
    build_edge_frame, bulk_poisson_report, edge_poisson_report, extract_bulk_local,
    extract_edge_local, gumbel_cdf, gumbel_statistic, ks_test,
)
from .sampler import (
    GasParameters, density_of_states_histogram, estimate_partition_ratio, run_chain,
    sample_iid, sample_tridiagonal_gbe,
)

log = logging.getLogger(__name__)

__all__ = ["StageError", "StatisticalFailure", "RunManifest", "run_pipeline",
           "stage_equilibrium", "stage_sample", "stage_stats", "load_samples"]


class StageError(RuntimeError):
    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class StatisticalFailure(RuntimeError):
    pass


def _fmt(x) -> str:
    return repr(float(x))


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


@dataclass
class RunManifest:
    config: dict
    version: str
    stages: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    verdict: str = "ok"

    def to_dict(self):
        return {"config": self.config, "version": self.version, "stages": self.stages,
                "warnings": self.warnings, "timing": self.timing, "verdict": self.verdict}


# ---------------------------------------------------------------------------
# stages

EQ_KEYS = ["kernel.family", "kernel.n", "kernel.s", "potential.family", "potential.alpha",
           "potential.grid", "potential.values", "gamma", "equilibrium.grid_size", "equilibrium.domain",
           "equilibrium.damping", "equilibrium.tol", "equilibrium.max_iter"]
SAMPLE_KEYS = EQ_KEYS + ["beta.override", "run.seed", "sample.sampler", "sample.N", "sample.replicas",
                         "sample.frames", "sample.burn_in", "sample.thin", "sample.keep",
                         "stats.kind", "stats.E", "stats.window", "stats.thresholds", "stats.upsilon",
                         "stats.unfold"]
STATS_KEYS = SAMPLE_KEYS + ["stats.level", "stats.ks_max", "stats.bins"]


def stage_equilibrium(cfg: ExperimentConfig, out: Path) -> dict:
    """Solve for the equilibrium measure; writes ``equilibrium.json`` and ``equilibrium.csv``."""
    K, V = cfg.kernel(), cfg.potential()
    gamma = cfg["gamma"]
    m, dom = cfg["equilibrium.grid_size"], cfg["equilibrium.domain"]
    if dom > 0 and V.family != "tabulated":
        grid = line_grid(-dom, dom, m) if V.n == 1 else radial_grid(dom, m)
    else:
        grid = default_grid(K, V, gamma, m=m)
    sol = solve_equilibrium(K, V, gamma, grid, damping=cfg["equilibrium.damping"],
                            tol=cfg["equilibrium.tol"], max_iter=cfg["equilibrium.max_iter"])
    E = cfg["stats.E"]
    summary = {
        "L_gamma": sol.L_gamma,
        "L_0": partition_constant(V),
        "gamma": gamma,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "free_energy": float(sol.free_energy_history[-1]),
        "mass": sol.density.mass,
        "density_at_E": float(sol.density_at(E if len(E) > 1 else E[0])),
        "E": E,
        "grid_kind": sol.density.kind,
        "grid_size": int(sol.density.size),
    }
    _dump_json(out / "equilibrium.json", summary)
    nodes = sol.density.node_points()
    U = np.asarray(sol.U).ravel()
    cols = ["x"] if nodes.shape[1] == 1 else [f"x{i + 1}" for i in range(nodes.shape[1])]
    _write_csv(out / "equilibrium.csv", cols + ["density", "potential"],
               (list(p) + [d, u] for p, d, u in zip(nodes, sol.density.values, U)))
    return summary


def _params(cfg: ExperimentConfig) -> GasParameters:
    return GasParameters(cfg["sample.N"], cfg["gamma"], cfg.kernel(), cfg.potential(), cfg.beta_override)


def _choose_sampler(cfg: ExperimentConfig, params: GasParameters) -> str:
    s = cfg["sample.sampler"]
    if s != "auto":
        return s
    if params.beta == 0:
        return "iid"
    V = params.potential
    if params.n == 1 and V.is_power and V.alpha == 2.0 and params.kernel.is_log:
        return "tridiag"
    return "mcmc"


def _keep_mode(cfg: ExperimentConfig) -> str:
    k = cfg["sample.keep"]
    if k != "auto":
        return k
    if cfg["stats.kind"] == "bulk" and cfg["stats.unfold"]:
        return "all"
    return {"bulk": "bulk", "edge": "edge", "gumbel": "max"}.get(cfg["stats.kind"], "all")


def _edge_frame(cfg, params, L):
    return build_edge_frame(params.potential, params.N, cfg["gamma"], L, cfg["stats.upsilon"],
                            kernel=params.kernel, betaN=params.betaN)


def stage_sample(cfg: ExperimentConfig, out: Path, eq: dict | None = None, threads: int = 1) -> dict:
    """Draw replicas; writes ``samples/replica_XXXX.csv`` and ``samples/samples.json``.

    Depending on ``sample.keep`` only the part of each configuration that
    downstream statistics can see is stored: a neighborhood of the bulk
    window, the pre-image of the edge window, or the maximum.
    """
    params = _params(cfg)
    sampler = _choose_sampler(cfg, params)
    keep = _keep_mode(cfg)
    N, R, F = params.N, cfg["sample.replicas"], cfg["sample.frames"]
    sdir = out / "samples"
    sdir.mkdir(parents=True, exist_ok=True)
    for old in sdir.glob("replica_*.csv"):
        old.unlink()
    seeds = np.random.SeedSequence(cfg["run.seed"]).spawn(R)

    lo = hi = None
    scale = float(N) ** (1.0 / params.n)
    E = np.asarray(cfg["stats.E"], dtype=float)
    if keep == "bulk":
        w = cfg["stats.window"]
        pad = 0.2 * (w[1] - w[0])
        lo, hi = E[0] + (w[0] - pad) / scale, E[0] + (w[1] + pad) / scale
    cut = None
    if keep == "edge":
        frame = _edge_frame(cfg, params, eq["L_gamma"])
        cut = (frame.upsilon, float(frame.eta_N + (min(cfg["stats.thresholds"]) - 1.0) / frame.alpha_N))

    burn = cfg["sample.burn_in"]
    thin = cfg["sample.thin"]
    burn = 10 * N if burn < 0 else burn
    thin = N if thin < 0 else thin

    def draw(i):
        frames, diag = [], {}
        if sampler == "iid":
            for s in (seeds[i].spawn(F) if F > 1 else [seeds[i]]):
                frames.append(np.asarray(sample_iid(params.potential, N, s).positions))
        elif sampler == "tridiag":
            ss = seeds[i].spawn(F) if F > 1 else [seeds[i]]
            for s in ss:
                if keep == "max":
                    lam = sample_tridiagonal_gbe(N, params.beta, s, top=1)
                elif keep == "bulk":
                    lam = sample_tridiagonal_gbe(N, params.beta, s, interval=(lo, hi))
                else:
                    lam = sample_tridiagonal_gbe(N, params.beta, s)
                frames.append(lam[:, None])
        else:
            run = run_chain(params, burn + F * thin, burn, thin, seeds[i])
            frames = [np.asarray(fr.positions) for fr in run]
            diag = {"acceptance": run.acceptance_rate, "autocorr_time": run.autocorr_time,
                    "proposal_scale": run.proposal_scale, "warnings": list(run.warnings)}
        rows = []
        for f, p in enumerate(frames):
            if keep == "max":
                p = p[np.argmax(p[:, 0])][None, :]
            elif keep == "bulk":
                p = p[(p[:, 0] > lo) & (p[:, 0] <= hi)]
            elif keep == "edge":
                p = p[p @ cut[0] >= cut[1]]
            rows.extend([f] + list(x) for x in p)
        cols = ["frame", "x"] if params.n == 1 else ["frame", "x1", "x2"]
        _write_csv(sdir / f"replica_{i:04d}.csv", cols, rows)
        return diag

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            diags = list(ex.map(draw, range(R)))
    else:
        diags = [draw(i) for i in range(R)]
    warn = sorted({w for d in diags for w in d.get("warnings", [])})
    meta = {
        "sampler": sampler, "keep": keep, "N": N, "n": params.n, "replicas": R, "frames": F,
        "beta": params.beta, "betaN": params.betaN, "gamma": params.gamma,
        "burn_in": burn if sampler == "mcmc" else 0, "thin": thin if sampler == "mcmc" else 0,
        "interval": [lo, hi] if keep == "bulk" else None,
        "acceptance": [d["acceptance"] for d in diags] if sampler == "mcmc" else None,
        "autocorr_time": [d["autocorr_time"] for d in diags] if sampler == "mcmc" else None,
        "warnings": warn,
    }
    _dump_json(sdir / "samples.json", meta)
    return meta


def load_samples(sdir) -> tuple[dict, list[np.ndarray]]:
    """Read a sample directory back: metadata and one ``(k, n)`` array per frame."""
    sdir = Path(sdir)
    meta = json.loads((sdir / "samples.json").read_text())
    frames = []
    for i in range(meta["replicas"]):
        with warnings.catch_warnings():
            # replicas with no retained points are header-only files
            warnings.simplefilter("ignore", UserWarning)
            data = np.loadtxt(sdir / f"replica_{i:04d}.csv", delimiter=",", skiprows=1, ndmin=2)
        n = meta["n"]
        for f in range(meta["frames"]):
            sel = data[data[:, 0] == f] if data.size else np.zeros((0, n + 1))
            frames.append(sel[:, 1:].reshape(-1, n))
    return meta, frames


def _unfold_scale(frames, E, half_width):
    """Points per unit length near ``E``, measured on the window that the
    resulting unfolding maps onto ``[-half_width, half_width]``."""
    h = 1.0
    for _ in range(3):
        tot = sum(int(np.sum(np.abs(p[:, 0] - E) < h)) for p in frames)
        lam = max(tot, 1) / (len(frames) * 2 * h)
        h = half_width / lam
    return lam


def stage_stats(cfg: ExperimentConfig, out: Path, eq: dict, meta: dict | None = None, frames=None) -> dict:
    """Run the statistics named by ``stats.kind``; writes ``stats.json`` and CSV tables."""
    kind = cfg["stats.kind"]
    params = _params(cfg)
    if kind in ("bulk", "edge", "gumbel"):
        if frames is None:
            meta, frames = load_samples(out / "samples")
    level = cfg["stats.level"]
    N = params.N
    res = {"kind": kind, "passed": True}
    if kind == "bulk":
        E = cfg["stats.E"][0]
        window = cfg["stats.window"]
        intensity = eq["density_at_E"]
        scale = None
        if cfg["stats.unfold"]:
            scale = _unfold_scale(frames, E, max(abs(window[0]), abs(window[1])))
            intensity = 1.0
        samples = [extract_bulk_local(p, E, N, window, scale=scale) for p in frames]
        rep = bulk_poisson_report(samples, intensity, level=level)
        res.update(rep.to_dict())
        res["unfold_scale"] = scale
        res["passed"] = rep.passed
        _write_csv(out / "counts.csv", ["replica"] + [f"w{j}" for j in range(len(rep.windows))],
                   ([i] + [int(c) for c in row] for i, row in enumerate(rep.counts)))
        _write_csv(out / "gaps.csv", ["gap"], ([g] for g in rep.gaps))
        h = rep.correlations[2]
        _write_csv(out / "r2.csv", ["r_lo", "r_hi", "R2", "count", "undersampled"],
                   ([a, b, v, int(c), int(u)] for a, b, v, c, u in
                    zip(h.edges[:-1], h.edges[1:], h.values, h.counts, h.undersampled)))
    elif kind == "edge":
        frame = _edge_frame(cfg, params, eq["L_gamma"])
        ts = cfg["stats.thresholds"]
        n = params.n
        window = [(min(ts), np.inf)] + [(-2.0, 2.0)] * (n - 1)
        samples = [extract_edge_local(p, frame, window) for p in frames]
        rep = edge_poisson_report(samples, ts, level=level)
        res.update(rep.to_dict())
        res["frame"] = {"eta_N": frame.eta_N, "eta_gamma": frame.eta_gamma, "alpha_N": frame.alpha_N,
                        "betaN": frame.betaN, "gamma": frame.gamma, "margins": frame.margins}
        res["passed"] = rep.passed
        _write_csv(out / "counts.csv", ["replica"] + [f"t={t:g}" for t in ts],
                   ([i] + [int(c) for c in row] for i, row in enumerate(rep.counts)))
    elif kind == "gumbel":
        xi = np.array([gumbel_statistic(p[:, 0].max(), N, params.betaN, eq["L_gamma"]) for p in frames])
        ks = ks_test(xi, gumbel_cdf)
        res.update({"ks": ks.statistic, "ks_pvalue": ks.pvalue, "median": float(np.median(xi)),
                    "gumbel_median": -math.log(math.log(2.0)), "replicas": len(xi),
                    "ks_max": cfg["stats.ks_max"], "passed": bool(ks.statistic <= cfg["stats.ks_max"])})
        _write_csv(out / "xi.csv", ["xi"], ([x] for x in xi))
    elif kind == "ratio":
        r = estimate_partition_ratio(params, cfg["sample.replicas"], np.random.SeedSequence(cfg["run.seed"]))
        res.update({"estimate": r.estimate, "stderr": r.stderr, "L_gamma": eq["L_gamma"], "L_0": r.L0,
                    "gap": abs(r.estimate - eq["L_gamma"])})
        res["passed"] = bool(res["gap"] < 3 * r.stderr + 0.05 * eq["L_gamma"])
    elif kind == "wegner":
        R, F = cfg["sample.replicas"], cfg["sample.frames"]
        burn = 10 * N if cfg["sample.burn_in"] < 0 else cfg["sample.burn_in"]
        thin = N if cfg["sample.thin"] < 0 else cfg["sample.thin"]
        seeds = np.random.SeedSequence(cfg["run.seed"]).spawn(R)
        runs = [run_chain(params, burn + F * thin, burn, thin, s) for s in seeds]
        h = density_of_states_histogram(params, runs, cfg["stats.bins"])
        ratio = wegner_ratio(params, h)
        res.update({"sup_ratio": ratio, "passed": bool(np.isfinite(ratio))})
        _write_csv(out / "dos.csv", ["x_lo", "x_hi", "density", "count"],
                   ([a, b, v, int(c)] for a, b, v, c in zip(h.edges[:-1], h.edges[1:], h.values, h.counts)))
    _dump_json(out / "stats.json", res)
    return res


def wegner_ratio(params: GasParameters, hist, min_count: int = 100) -> float:
    """Sup over well-sampled bins of ``histogram / exp(-V + beta (N-1) theta)``."""
    c = hist.centers
    pts = c if params.n == 1 else np.stack([c, np.zeros_like(c)], axis=1)
    vt = np.asarray(eval_potential(params.potential, pts)) - params.beta * (params.N - 1) * np.asarray(
        params.kernel.tilt(pts))
    ok = hist.counts >= min_count
    return float(np.max(hist.values[ok] / np.exp(-vt[ok])))


# ---------------------------------------------------------------------------
# driver


def _stage_key(name, cfg, keys, upstream=""):
    return hashlib.sha256(f"{name}|{__version__}|{cfg.digest(keys)}|{upstream}".encode()).hexdigest()


def _outputs(out: Path, files):
    return {str(f.relative_to(out)): _sha(f) for f in sorted(files)}


def _cached(cache, name, key, out):
    ent = cache.get(name)
    if not ent or ent.get("key") != key:
        return False
    for rel, h in ent["outputs"].items():
        p = out / rel
        if not p.exists() or _sha(p) != h:
            return False
    return True


def run_pipeline(config: ExperimentConfig, out_dir=None, threads: int | None = None) -> RunManifest:
    """Validate, then run equilibrium, sample and stats, reusing cached stages.

    Raises :class:`ConfigError` on validation errors, :class:`StageError`
    naming the stage on failures, and :class:`StatisticalFailure` (after
    writing the manifest) when a test in the stats stage fails.
    """
    findings = validate(config)
    errors = [f for f in findings if f.level == "error"]
    if errors:
        raise ConfigError("; ".join(str(e) for e in errors))
    out = Path(out_dir or config["run.out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or config["run.threads"]
    cache_path = out / "cache.json"
    cache = json.loads(cache_path.read_text()) if cache_path.exists() else {}
    man = RunManifest(config.values, __version__, warnings=[str(f) for f in findings])
    kind = config["stats.kind"]

    def run_stage(name, keys, upstream, fn, files):
        key = _stage_key(name, config, keys, upstream)
        t0 = time.perf_counter()
        hit = _cached(cache, name, key, out)
        if not hit:
            try:
                fn()
            except NonConvergenceError:
                raise
            except (ValueError, RuntimeError) as exc:
                raise StageError(name, str(exc)) from exc
            cache[name] = {"key": key, "outputs": _outputs(out, files())}
            cache_path.write_text(json.dumps(cache, indent=2, sort_keys=True) + "\n")
        man.timing[name] = time.perf_counter() - t0
        man.stages[name] = {"key": key, "cached": hit, "outputs": cache[name]["outputs"]}
        return "".join(cache[name]["outputs"].values())

    up = run_stage("equilibrium", EQ_KEYS, "", lambda: stage_equilibrium(config, out),
                   lambda: [out / "equilibrium.json", out / "equilibrium.csv"])
    eq = json.loads((out / "equilibrium.json").read_text())
    if kind in ("bulk", "edge", "gumbel"):
        up = run_stage("sample", SAMPLE_KEYS, up, lambda: stage_sample(config, out, eq, threads),
                       lambda: list((out / "samples").glob("*")))
        man.warnings.extend(json.loads((out / "samples" / "samples.json").read_text())["warnings"])
    if kind != "none":
        data_files = ["stats.json", "counts.csv", "gaps.csv", "r2.csv", "xi.csv", "dos.csv"]
        run_stage("stats", STATS_KEYS, up, lambda: stage_stats(config, out, eq),
                  lambda: [out / f for f in data_files if (out / f).exists()])
        res = json.loads((out / "stats.json").read_text())
        if not res["passed"]:
            man.verdict = "statistical failure"
    _dump_json(out / "manifest.json", man.to_dict())
    (out / "config.toml").write_text(config.to_toml())
    if man.verdict != "ok":
        raise StatisticalFailure(f"statistical test failed; see {out / 'stats.json'}")
    return man
