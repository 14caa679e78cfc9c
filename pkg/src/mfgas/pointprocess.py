"""Local point processes, scaling frames and goodness-of-fit statistics.

A configuration is zoomed either around a bulk point ``E`` (scale
``N**(1/n)``) or around the edge of a gas in ``|x|**alpha`` through the
frame ``phi_N(x) = E_N + psi(x) / alpha_N``. The statistics below test the
zoomed samples against Poisson processes and the rescaled maximum against
the Gumbel law.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy import stats

from .equilibrium import DomainError
from .kernels import InteractionKernel, Potential, hessian_norm

log = logging.getLogger(__name__)

__all__ = [
    "Box",
    "Histogram",
    "PointSample",
    "EdgeFrame",
    "FrameConditionError",
    "StatReport",
    "ChiSquareResult",
    "extract_bulk_local",
    "edge_radius_riesz",
    "edge_radius_log",
    "householder_rotation",
    "build_edge_frame",
    "extract_edge_local",
    "edge_intensity",
    "gumbel_statistic",
    "gumbel_cdf",
    "count_in_windows",
    "gap_statistics",
    "gap_ks_test",
    "estimate_correlations",
    "ks_test",
    "dispersion_test",
    "poisson_chi2_test",
    "poisson_process",
    "unit_windows",
    "bulk_poisson_report",
    "edge_poisson_report",
]


class FrameConditionError(RuntimeError):
    """An edge-frame condition is violated beyond the error threshold."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``prod [lo_i, hi_i]``; bounds may be infinite."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box needs lo < hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def of(cls, w, n: int = 1) -> "Box":
        """Coerce ``w``: a Box, ``(lo, hi)`` in 1D, or a list of ``(lo, hi)`` per axis."""
        if isinstance(w, Box):
            return w
        a = np.asarray(w, dtype=float)
        if a.shape == (2,):
            a = np.tile(a, (n, 1))
        if a.shape != (n, 2):
            raise ValueError(f"cannot read a window in R^{n} from {w!r}")
        return cls(tuple(a[:, 0]), tuple(a[:, 1]))

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def lengths(self) -> np.ndarray:
        return np.subtract(self.hi, self.lo)

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    def contains(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=float).reshape(-1, self.n)
        return np.all((p >= self.lo) & (p <= self.hi), axis=1)


@dataclass(frozen=True)
class Histogram:
    """Binned estimate. ``values`` are normalized, ``counts`` raw."""

    edges: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    total: float = 0.0
    undersampled: np.ndarray | None = None

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def density(self) -> np.ndarray:
        return self.values


@dataclass(frozen=True, eq=False)
class PointSample:
    """Zoomed points in ``window`` with the data needed to undo the zoom.

    ``frame`` is a dict: ``{"kind": "bulk", "E", "N", "scale"}`` or
    ``{"kind": "edge", "N", "frame": EdgeFrame}``.
    """

    points: np.ndarray
    window: Box
    frame: dict = field(default_factory=dict)

    def __len__(self):
        return self.points.shape[0]

    def to_original(self) -> np.ndarray:
        f = self.frame
        if f.get("kind") == "bulk":
            return np.asarray(f["E"]) + self.points / f["scale"]
        if f.get("kind") == "edge":
            return f["frame"].phi(self.points)
        raise ValueError("sample has no frame record")


def _config_points(config, n: int | None = None) -> np.ndarray:
    a = np.asarray(getattr(config, "positions", config), dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if n is not None and a.shape[1] != n:
        raise ValueError(f"expected points in R^{n}")
    return a


def extract_bulk_local(config, E, N: int, window=None, scale: float | None = None) -> PointSample:
    """``{N**(1/n) (x_j - E)}`` restricted to ``window`` (default ``[-5, 5]**n``).

    ``scale`` replaces ``N**(1/n)``, e.g. to unfold by a measured intensity.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    n = E.size
    pts = _config_points(config, n)
    box = Box.of((-5.0, 5.0) if window is None else window, n)
    c = float(N) ** (1.0 / n) if scale is None else float(scale)
    z = c * (pts - E)
    keep = box.contains(z)
    return PointSample(z[keep], box, {"kind": "bulk", "E": E, "N": N, "scale": c})


# ---------------------------------------------------------------------------
# edge frame


def _edge_radius(N, alpha, n, coef, L):
    if not N > math.e:
        raise DomainError("N must exceed e so that log log N is defined")
    if not alpha > 0:
        raise DomainError("alpha must be > 0")
    lN = math.log(N)
    llN = math.log(lN)
    return lN ** (1.0 / alpha) * (1.0 + coef / alpha**2 * llN / lN
                                  - math.log(alpha**n * L) / (alpha * lN))


def edge_radius_riesz(N, alpha: float, n: int, L_gamma: float) -> float:
    """Effective edge radius of a Riesz gas in ``|x|**alpha``."""
    return _edge_radius(N, alpha, n, -n * (alpha - 1.0), L_gamma)


def edge_radius_log(N, alpha: float, n: int, betaN: float, L_gamma: float) -> float:
    """Effective edge radius of a log gas; depends on the actual ``beta*N``."""
    return _edge_radius(N, alpha, n, betaN - n * (alpha - 1.0), L_gamma)


def householder_rotation(upsilon) -> np.ndarray:
    """Matrix in SO(n) sending ``e_1`` to the unit vector ``upsilon``.

    A Householder reflection swaps ``e_1`` and ``upsilon``; flipping the
    last coordinate first restores determinant +1. In one dimension SO(1)
    is trivial, so ``upsilon = -1`` gives the reflection ``x -> -x``.
    """
    u = np.atleast_1d(np.asarray(upsilon, dtype=float))
    n = u.size
    if abs(np.linalg.norm(u) - 1.0) > 1e-12:
        raise ValueError("upsilon must be a unit vector")
    if n == 1:
        return np.array([[np.sign(u[0])]])
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = e1 - u
    nv = np.linalg.norm(v)
    if nv < 1e-15:
        return np.eye(n)
    v /= nv
    H = np.eye(n) - 2.0 * np.outer(v, v)
    D = np.eye(n)
    D[-1, -1] = -1.0
    return H @ D


@dataclass(frozen=True, eq=False)
class EdgeFrame:
    """Edge zoom ``phi_N(x) = E_N + R x / alpha_N`` with ``E_N = eta_N upsilon``.

    ``margins`` holds the numerical condition checks; ``eta_gamma`` is the
    radius with ``gamma`` in place of ``beta*N`` (only differs for log gases
    with a coupling override).
    """

    N: int
    eta_N: float
    alpha_N: float
    upsilon: np.ndarray
    rotation: np.ndarray
    alpha: float
    L_gamma: float
    betaN: float
    gamma: float
    family: str
    eta_gamma: float
    margins: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.upsilon.size

    @property
    def E_N(self) -> np.ndarray:
        return self.eta_N * self.upsilon

    def psi(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float).reshape(-1, self.n) @ self.rotation.T

    def phi(self, x) -> np.ndarray:
        return self.E_N + self.psi(x) / self.alpha_N

    def phi_inv(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, self.n)
        return (self.alpha_N * (y - self.E_N)) @ self.rotation


def build_edge_frame(pot: Potential, N: int, gamma: float, L_gamma: float, upsilon=None,
                     kernel: InteractionKernel | None = None, betaN: float | None = None,
                     window_radius: float = 6.0, warn_at: float = 0.1,
                     fail_at: float = 0.5) -> EdgeFrame:
    """Edge frame for ``V = |x|**alpha``.

    The kernel family picks the radius formula (Riesz when ``kernel`` is
    None). Condition margins recorded: ``c1`` (``|ratio - 1|`` for
    ``N exp(-V(E_N)) / (L alpha_N**n)``), ``c4`` (same with the
    ``exp(beta N log|E_N|)`` factor, log gases) and ``c2``
    (``alpha_N**-2 sup ||Hess V||`` over ``|x| <= window_radius``).
    Margins above ``warn_at`` are logged; above ``fail_at`` they raise
    :class:`FrameConditionError`.
    """
    if not pot.is_power:
        raise ValueError("edge frames need a power potential")
    n = pot.n
    a = pot.alpha
    if upsilon is None:
        upsilon = np.eye(n)[0]
    u = np.atleast_1d(np.asarray(upsilon, dtype=float))
    if u.size != n:
        raise ValueError("upsilon has the wrong dimension")
    bN = gamma if betaN is None else float(betaN)
    is_log = kernel is not None and kernel.is_log
    if is_log:
        eta = edge_radius_log(N, a, n, bN, L_gamma)
        eta_g = edge_radius_log(N, a, n, gamma, L_gamma)
    else:
        eta = eta_g = edge_radius_riesz(N, a, n, L_gamma)
    if not eta > 0:
        raise DomainError(f"edge radius is not positive at N={N}")
    aN = a * eta ** (a - 1.0)
    R = householder_rotation(u)

    margins = {}
    lr = math.log(N) - eta**a - math.log(L_gamma) - n * math.log(aN)
    margins["c1"] = abs(math.exp(lr) - 1.0)
    if is_log:
        margins["c4"] = abs(math.exp(lr + bN * math.log(eta)) - 1.0)
    frame = EdgeFrame(N, eta, aN, u, R, a, L_gamma, bN, gamma, "log" if is_log else "riesz", eta_g, margins)
    # Hessian sup over the ball, probed along the normal direction and a shell
    ts = np.linspace(-window_radius, window_radius, 121)
    probes = [np.outer(ts, np.eye(n)[0])]
    if n > 1:
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        probes.append(window_radius * np.stack([np.cos(ang), np.sin(ang)] + [np.zeros_like(ang)] * (n - 2), axis=1))
    ys = frame.phi(np.concatenate(probes))
    margins["c2"] = float(np.max(hessian_norm(pot, ys))) / aN**2

    bad = {k: v for k, v in margins.items() if k != "c1" or not is_log}
    for k, v in bad.items():
        if v > fail_at:
            raise FrameConditionError(f"edge condition {k} violated at N={N}: margin {v:.3g}")
        if v > warn_at:
            log.warning("edge condition %s weak at N=%d: margin %.3g", k, N, v)
    return frame


def extract_edge_local(config, frame: EdgeFrame, window=None) -> PointSample:
    """``{phi_N^{-1}(x_j)}`` restricted to ``window`` (default ``[-1, 6] x [-2, 2]**(n-1)``)."""
    n = frame.n
    pts = _config_points(config, n)
    if window is None:
        window = [(-1.0, 6.0)] + [(-2.0, 2.0)] * (n - 1)
    box = Box.of(window, n)
    z = frame.phi_inv(pts)
    keep = box.contains(z)
    return PointSample(z[keep], box, {"kind": "edge", "N": frame.N, "frame": frame})


def edge_intensity(x) -> np.ndarray:
    """Limit intensity in edge coordinates, ``exp(-x_1)``."""
    x = np.asarray(x, dtype=float)
    return np.exp(-(x[..., 0] if x.ndim > 1 else x))


# ---------------------------------------------------------------------------
# Gumbel


def gumbel_statistic(config, N: int, betaN: float, L_gamma: float) -> float:
    """Centered and scaled maximum of a 1D gas in ``x**2``.

    ``config`` is a configuration, an array of positions, or the maximum
    itself as a float.
    """
    if not N > math.e:
        raise DomainError("N must exceed e so that log log N is defined")
    a = np.asarray(getattr(config, "positions", config), dtype=float)
    m = float(a.max()) if a.size > 1 else float(a.reshape(()))
    lN = math.log(N)
    return 2.0 * (math.sqrt(lN) * m - lN) - 0.5 * (betaN - 1.0) * math.log(lN) + math.log(2.0 * L_gamma)


def gumbel_cdf(t):
    return np.exp(-np.exp(-np.asarray(t, dtype=float)))


# ---------------------------------------------------------------------------
# goodness of fit


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    pvalue: float
    mean: float
    expected_mean: float | None

    def passed(self, level: float) -> bool:
        return self.pvalue >= level


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    m: int

    def __float__(self):
        return self.statistic


def ks_test(sample, cdf) -> KSResult:
    """Kolmogorov-Smirnov distance between ``sample`` and a continuous ``cdf``."""
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    r = stats.kstest(x, cdf)
    return KSResult(float(r.statistic), float(r.pvalue), x.size)


def dispersion_test(counts) -> tuple[float, float]:
    """Index ``var / mean`` (ddof 1) and a two-sided chi-square p-value.

    Under a Poisson law ``(m - 1) * index`` is roughly chi-square with
    ``m - 1`` degrees of freedom.
    """
    c = np.asarray(counts, dtype=float).ravel()
    m = c.size
    if m < 2:
        raise ValueError("need at least two counts")
    mean = c.mean()
    var = c.var(ddof=1)
    if var == 0:
        return 0.0, 0.0
    if mean == 0:
        return math.nan, math.nan
    idx = var / mean
    q = (m - 1) * idx
    p = 2.0 * min(stats.chi2.cdf(q, m - 1), stats.chi2.sf(q, m - 1))
    return float(idx), float(min(p, 1.0))


def poisson_chi2_test(counts, mean: float | None = None, min_expected: float = 5.0) -> ChiSquareResult:
    """Pearson chi-square test of integer counts against a Poisson law.

    With ``mean=None`` the mean is estimated and one degree of freedom is
    dropped. Cells ``0, 1, ...`` are merged from both ends until every
    expected count is at least ``min_expected``; the top cell is a tail.
    """
    c = np.asarray(counts).ravel().astype(int)
    m = c.size
    if m == 0:
        raise ValueError("empty count sample")
    lam = float(c.mean()) if mean is None else float(mean)
    kmax = max(int(c.max()), int(lam + 10 * math.sqrt(lam + 1)) + 1)
    probs = stats.poisson.pmf(np.arange(kmax), lam)
    probs = np.append(probs, stats.poisson.sf(kmax - 1, lam))
    obs = np.bincount(np.minimum(c, kmax), minlength=kmax + 1).astype(float)
    exp = probs * m
    # merge low cells forward, then high cells backward
    cells_o, cells_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(obs, exp):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    if cells_e:
        cells_o[-1] += acc_o
        cells_e[-1] += acc_e
    else:
        cells_o, cells_e = [acc_o], [acc_e]
    cells_o, cells_e = np.array(cells_o), np.array(cells_e)
    df = cells_o.size - 1 - (1 if mean is None else 0)
    if df < 1:
        return ChiSquareResult(0.0, 0, 1.0, float(c.mean()), None if mean is None else lam)
    stat = float(np.sum((cells_o - cells_e) ** 2 / cells_e))
    return ChiSquareResult(stat, df, float(stats.chi2.sf(stat, df)), float(c.mean()),
                           None if mean is None else lam)


def poisson_process(rate: float, window, replicas: int, seed=None, n: int = 1) -> list[PointSample]:
    """Independent homogeneous Poisson samples of intensity ``rate`` in a bounded box."""
    box = Box.of(window, n)
    if not np.isfinite(box.measure):
        raise ValueError("window must be bounded")
    rng = np.random.default_rng(seed)
    out = []
    lo, L = np.asarray(box.lo), box.lengths
    for _ in range(replicas):
        k = rng.poisson(rate * box.measure)
        pts = lo + rng.random((k, box.n)) * L
        out.append(PointSample(pts, box, {"kind": "synthetic", "rate": rate}))
    return out


def _sample_points(s, n=None):
    if isinstance(s, PointSample):
        return s.points
    return _config_points(s, n)


def unit_windows(lo: float = -5.0, hi: float = 5.0, n: int = 1) -> list[Box]:
    """Disjoint unit windows tiling ``[lo, hi]`` along the first axis
    (unit transverse side in 2D)."""
    ks = np.arange(math.floor(lo), math.ceil(hi))
    return [Box((k,) + (-0.5,) * (n - 1), (k + 1,) + (0.5,) * (n - 1)) for k in ks]


@dataclass(frozen=True, eq=False)
class StatReport:
    """Window counts, gaps, KS distances and correlation histograms."""

    replicas: int
    counts: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    dispersion: np.ndarray
    windows: tuple = ()
    gaps: np.ndarray | None = None
    ks: dict = field(default_factory=dict)
    correlations: dict = field(default_factory=dict)
    tests: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return {
            "replicas": self.replicas,
            "windows": [[list(w.lo), list(w.hi)] for w in self.windows],
            "mean": clean(self.mean),
            "variance": clean(self.variance),
            "dispersion": clean(self.dispersion),
            "ks": clean(self.ks),
            "tests": clean(self.tests),
            "verdicts": clean(self.verdicts),
            "passed": self.passed,
        }


def count_in_windows(samples, windows) -> StatReport:
    """Counts per replica and window, with mean, variance and dispersion index."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")
    if len(samples) < 30:
        raise ValueError("need at least 30 replica samples")
    n = _sample_points(samples[0]).shape[1]
    wins = [Box.of(w, n) for w in windows]
    counts = np.array([[int(w.contains(_sample_points(s, n)).sum()) for w in wins] for s in samples])
    mean = counts.mean(axis=0)
    var = counts.var(axis=0, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        disp = np.where(mean > 0, var / np.where(mean > 0, mean, 1.0), 0.0)
    return StatReport(len(samples), counts, mean, var, disp, tuple(wins))


@dataclass(frozen=True)
class Gaps:
    """Forward gaps (sorted) and, aligned with them, the room to the window edge."""

    gaps: np.ndarray
    horizons: np.ndarray

    def __len__(self):
        return self.gaps.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.gaps, dtype=dtype)


def gap_statistics(samples) -> Gaps:
    """Pooled forward nearest-neighbor gaps of 1D samples.

    For each point the gap to the next point to its right is recorded
    together with the distance from the point to the window's right edge;
    the last point of each sample has no observable gap and is skipped.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")
    gs, hs = [], []
    for s in samples:
        p = _sample_points(s, 1)[:, 0]
        hi = s.window.hi[0] if isinstance(s, PointSample) else np.inf
        p = np.sort(p)
        if p.size < 2:
            continue
        gs.append(np.diff(p))
        hs.append(hi - p[:-1])
    g = np.concatenate(gs) if gs else np.zeros(0)
    h = np.concatenate(hs) if hs else np.zeros(0)
    order = np.argsort(g, kind="stable")
    return Gaps(g[order], h[order])


def gap_ks_test(gaps: Gaps, rate: float) -> KSResult:
    """KS test of forward gaps against the exponential law with ``rate``.

    Each gap is only observable when shorter than its horizon, so it is
    mapped through the exponential CDF truncated at that horizon; under a
    Poisson process the images are i.i.d. uniform.
    """
    g, h = gaps.gaps, gaps.horizons
    F = -np.expm1(-rate * g)
    Fh = np.where(np.isfinite(h), -np.expm1(-rate * h), 1.0)
    return ks_test(F / Fh, stats.uniform.cdf)


def _pair_measure_1d(L: float, r0: float, r1: float) -> float:
    """Measure of ``{(x, y) in [0, L]^2 : r0 <= |x - y| < r1}``."""
    a, b = min(r0, L), min(r1, L)
    return 2.0 * ((L * b - 0.5 * b * b) - (L * a - 0.5 * a * a))


def _pair_measure_box(box: Box, r0: float, r1: float) -> float:
    if box.n == 1:
        return _pair_measure_1d(box.lengths[0], r0, r1)
    L1, L2 = box.lengths[:2]
    rs, wr = np.polynomial.legendre.leggauss(16)
    rr = 0.5 * (r1 - r0) * rs + 0.5 * (r1 + r0)
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    d1 = np.abs(np.outer(rr, np.cos(th)))
    d2 = np.abs(np.outer(rr, np.sin(th)))
    cov = np.clip(L1 - d1, 0, None) * np.clip(L2 - d2, 0, None)
    ring = cov.mean(axis=1) * 2 * np.pi * rr
    return float(0.5 * (r1 - r0) * np.dot(wr, ring))


def estimate_correlations(samples, k: int, bins, min_count: int = 10) -> Histogram:
    """One- and two-point correlation histograms.

    ``k=1`` bins the first coordinate and divides by replicas and bin
    volume (transverse window measure included). ``k=2`` bins ordered pair
    distances and divides by replicas and the measure of point pairs of
    the window at that distance, which removes the window edge bias.
    Bins with fewer than ``min_count`` raw counts are flagged.
    """
    if k not in (1, 2):
        raise ValueError("only k = 1 or k = 2 is supported")
    samples = list(samples)
    if len(samples) < 100:
        raise ValueError("need at least 100 replica samples")
    box = samples[0].window if isinstance(samples[0], PointSample) else None
    if box is None or not np.isfinite(box.measure):
        raise ValueError("samples must carry a bounded window")
    R = len(samples)
    edges = np.asarray(bins, dtype=float)
    if k == 1:
        x = np.concatenate([_sample_points(s)[:, 0] for s in samples])
        counts, edges = np.histogram(x, bins=edges)
        vol = np.diff(edges) * (box.measure / box.lengths[0])
        vals = counts / (R * vol)
    else:
        counts = np.zeros(edges.size - 1, dtype=np.int64)
        for s in samples:
            p = _sample_points(s)
            if p.shape[0] < 2:
                continue
            d = np.sqrt(np.sum((p[:, None, :] - p[None, :, :]) ** 2, axis=-1))
            iu = np.triu_indices(p.shape[0], 1)
            counts += 2 * np.histogram(d[iu], bins=edges)[0]
        meas = np.array([_pair_measure_box(box, a, b) for a, b in zip(edges[:-1], edges[1:])])
        vals = counts / (R * meas)
    under = counts < min_count
    return Histogram(edges, vals, counts, float(R), under)


# ---------------------------------------------------------------------------
# test batteries


def bulk_poisson_report(samples, intensity: float, windows=None, level: float = 0.01,
                        bins=None, mean_tol: float = 0.10, dip_ratio: float = 0.7) -> StatReport:
    """Poisson battery for 1D bulk samples with predicted ``intensity``.

    Verdicts: ``counts`` (chi-square per unit window, Bonferroni at
    ``level``), ``mean`` (pooled mean within ``mean_tol`` relative),
    ``gaps`` (truncation-corrected KS vs Exp(intensity) at ``level``) and
    ``no_dip`` (smallest pair-distance bin at least ``dip_ratio`` times the
    plateau, the mean of the remaining bins).
    """
    samples = list(samples)
    box = samples[0].window
    if windows is None:
        windows = unit_windows(box.lo[0], box.hi[0])
    rep = count_in_windows(samples, windows)
    nw = len(rep.windows)
    chi = [poisson_chi2_test(rep.counts[:, j]) for j in range(nw)]
    pmin = min(r.pvalue for r in chi)
    pooled = float(rep.counts.mean() / np.mean([w.measure for w in rep.windows]))
    gaps = gap_statistics(samples)
    ks = gap_ks_test(gaps, intensity)
    if bins is None:
        bins = np.linspace(0.0, 2.5, 11) / max(intensity, 1e-300)
    r2 = estimate_correlations(samples, 2, bins)
    smallest = float(r2.values[0])
    plateau = float(np.mean(r2.values[1:]))
    verdicts = {
        "counts": bool(pmin >= level / nw),
        "mean": bool(abs(pooled - intensity) <= mean_tol * intensity),
        "gaps": bool(ks.pvalue >= level),
        "no_dip": bool(smallest >= dip_ratio * plateau),
    }
    tests = {
        "chi2_pvalues": [r.pvalue for r in chi],
        "chi2_min_pvalue": pmin,
        "bonferroni_level": level / nw,
        "pooled_intensity": pooled,
        "expected_intensity": intensity,
        "gap_ks_pvalue": ks.pvalue,
        "r2_smallest": smallest,
        "r2_plateau": plateau,
        "dispersion_pvalues": [dispersion_test(rep.counts[:, j])[1] for j in range(nw)],
    }
    return StatReport(rep.replicas, rep.counts, rep.mean, rep.variance, rep.dispersion, rep.windows,
                      gaps.gaps, {"gaps": ks.statistic}, {2: r2}, tests, verdicts)


def edge_poisson_report(samples, ts=(-1.0, 0.0, 1.0), level: float = 0.01) -> StatReport:
    """Counts in ``[t, inf) x (transverse window)`` against Poisson with mean
    ``exp(-t)`` times the transverse measure; Bonferroni across ``ts``."""
    samples = list(samples)
    box = samples[0].window
    n = box.n
    tmeas = float(np.prod(box.lengths[1:])) if n > 1 else 1.0
    wins = [Box((t,) + box.lo[1:], (np.inf,) + box.hi[1:]) for t in ts]
    for t in ts:
        if t < box.lo[0]:
            raise ValueError("threshold below the extraction window")
    rep = count_in_windows(samples, wins)
    means = [math.exp(-t) * tmeas for t in ts]
    chi = [poisson_chi2_test(rep.counts[:, j], mean=mu) for j, mu in enumerate(means)]
    verdicts = {f"t={t:g}": bool(r.pvalue >= level / len(ts)) for t, r in zip(ts, chi)}
    tests = {
        "thresholds": list(ts),
        "expected_means": means,
        "observed_means": rep.mean.tolist(),
        "chi2_pvalues": [r.pvalue for r in chi],
        "bonferroni_level": level / len(ts),
    }
    return StatReport(rep.replicas, rep.counts, rep.mean, rep.variance, rep.dispersion, rep.windows,
                      None, {}, {}, tests, verdicts)
