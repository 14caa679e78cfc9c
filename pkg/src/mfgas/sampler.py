"""Sampling the N-particle Gibbs measure.

Three samplers share one output type (:class:`ParticleConfiguration`):

* random-walk Metropolis with single-particle moves and O(N) incremental
  energy updates (:func:`run_chain`), for any kernel and potential;
* i.i.d. draws from ``exp(-V)`` (:func:`sample_iid`), the zero-coupling
  case;
* the tridiagonal matrix model for ``V(x) = x**2`` in one dimension
  (:func:`sample_tridiagonal_gbe`), an exact sampler for any ``beta > 0``.

Random numbers are drawn with numpy ``Generator`` objects in blocks and
handed to compiled loops, so a seed fixes every chain bit for bit.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
import warnings

import numba
import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .kernels import InteractionKernel, Potential, partition_constant
from .pointprocess import Histogram

log = logging.getLogger(__name__)

__all__ = [
    "GasParameters",
    "ParticleConfiguration",
    "ChainState",
    "ChainRun",
    "SamplerConfigError",
    "total_energy",
    "delta_energy",
    "acceptance_probability",
    "init_chain",
    "mh_step",
    "run_chain",
    "run_replicas",
    "sample_iid",
    "sample_tridiagonal_gbe",
    "empirical_field",
    "estimate_partition_ratio",
    "density_of_states_histogram",
    "integrated_autocorr_time",
]


class SamplerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GasParameters:
    """Particle count, coupling and model.

    ``beta`` is ``gamma / N`` unless ``beta_override`` is given.
    """

    N: int
    gamma: float
    kernel: InteractionKernel
    potential: Potential
    beta_override: float | None = None

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.kernel.n != self.potential.n:
            raise ValueError("kernel and potential dimensions differ")
        if self.beta_override is not None and self.beta_override < 0:
            raise ValueError("beta must be >= 0")

    @property
    def n(self) -> int:
        return self.kernel.n

    @property
    def beta(self) -> float:
        if self.beta_override is not None:
            return float(self.beta_override)
        return self.gamma / self.N if self.N > 0 else 0.0

    @property
    def betaN(self) -> float:
        return self.beta * self.N

    def with_N(self, N: int, keep_beta: bool = False) -> "GasParameters":
        """Same model with ``N`` particles; ``keep_beta`` pins the current beta."""
        return replace(self, N=N, beta_override=self.beta if keep_beta else self.beta_override)


# ---------------------------------------------------------------------------
# compiled kernels

_RIESZ, _LOG = 0, 1
_POWER, _TAB1, _TABR = 0, 1, 2


def _kernel_code(kernel: InteractionKernel):
    return (_LOG, 0.0) if kernel.is_log else (_RIESZ, float(kernel.s))


def _pot_code(pot: Potential):
    if pot.is_power:
        return _POWER, float(pot.alpha), np.zeros(2), np.zeros(2)
    g, v = pot.table_arrays()
    return (_TAB1 if pot.n == 1 else _TABR), 0.0, g, v


@numba.njit(cache=True, nogil=True)
def _g(kind, s, d2):
    if d2 == 0.0:
        return np.inf
    if kind == 1:
        return -0.5 * math.log(d2)
    return d2 ** (-0.5 * s)


@numba.njit(cache=True, nogil=True)
def _interp(t, tx, tv):
    if t < tx[0] or t > tx[-1]:
        return np.inf
    k = np.searchsorted(tx, t, side="right") - 1
    if k >= tx.size - 1:
        return tv[-1]
    w = (t - tx[k]) / (tx[k + 1] - tx[k])
    return (1.0 - w) * tv[k] + w * tv[k + 1]


@numba.njit(cache=True, nogil=True)
def _V(pkind, alpha, tx, tv, x):
    if pkind == 1:
        return _interp(x[0], tx, tv)
    r2 = 0.0
    for c in range(x.size):
        r2 += x[c] * x[c]
    if pkind == 2:
        return _interp(math.sqrt(r2), tx, tv)
    if alpha == 2.0:
        return r2
    return r2 ** (0.5 * alpha)


@numba.njit(cache=True, nogil=True)
def _pot_sum(pos, pkind, alpha, tx, tv):
    tot = 0.0
    for i in range(pos.shape[0]):
        tot += _V(pkind, alpha, tx, tv, pos[i])
    return tot


@numba.njit(cache=True, nogil=True)
def _field_at(pos, y, skip, kind, s, d2buf):
    """Sum of ``g(y, x_i)`` over ``i != skip``; squared distances go to ``d2buf``.

    For the log kernel the distances are multiplied together and the log
    taken once per run of factors, flushing before the product leaves
    ``[1e-150, 1e150]``.
    """
    N, n = pos.shape
    tot = 0.0
    prod = 1.0
    for i in range(N):
        if i == skip:
            d2buf[i] = 1.0
            continue
        d2 = 0.0
        for c in range(n):
            d = pos[i, c] - y[c]
            d2 += d * d
        d2buf[i] = d2
        if d2 == 0.0:
            return np.inf
        if kind == 1:
            if prod < 1e-150 or prod > 1e150 or d2 < 1e-150 or d2 > 1e150:
                tot += math.log(prod)
                prod = 1.0
            prod *= d2
        else:
            tot += d2 ** (-0.5 * s)
    if kind == 1:
        tot = -0.5 * (tot + math.log(prod))
    return tot


@numba.njit(cache=True, nogil=True)
def _fields(pos, kind, s):
    N = pos.shape[0]
    out = np.empty(N)
    d2buf = np.empty(N)
    for i in range(N):
        out[i] = _field_at(pos, pos[i], i, kind, s, d2buf)
    return out


@numba.njit(cache=True, nogil=True)
def _delta(pos, fields, beta, j, y, kind, s, pkind, alpha, tx, tv, d2buf):
    vy = _V(pkind, alpha, tx, tv, y)
    if vy == np.inf:
        return np.inf, 0.0
    dv = vy - _V(pkind, alpha, tx, tv, pos[j])
    if beta == 0.0:
        return dv, 0.0
    fy = _field_at(pos, y, j, kind, s, d2buf)
    if fy == np.inf:
        return np.inf, fy
    return beta * (fy - fields[j]) + dv, fy


@numba.njit(cache=True, nogil=True)
def _mh_block(pos, fields, energy, beta, kind, s, pkind, alpha, tx, tv,
              idx, normals, logu, scale):
    N, n = pos.shape
    y = np.empty(n)
    d2buf = np.empty(N)
    acc = 0
    for t in range(idx.size):
        j = idx[t]
        for c in range(n):
            y[c] = pos[j, c] + scale * normals[t, c]
        d, fy = _delta(pos, fields, beta, j, y, kind, s, pkind, alpha, tx, tv, d2buf)
        if not (logu[t] < -d):
            continue
        acc += 1
        energy += d
        if beta != 0.0:
            # d2buf still holds the distances to the accepted point
            for i in range(N):
                if i == j:
                    continue
                d2o = 0.0
                for c in range(n):
                    b = pos[i, c] - pos[j, c]
                    d2o += b * b
                if kind == 1:
                    fields[i] -= 0.5 * math.log(d2buf[i] / d2o)
                else:
                    fields[i] += d2buf[i] ** (-0.5 * s) - d2o ** (-0.5 * s)
            fields[j] = fy
        for c in range(n):
            pos[j, c] = y[c]
    return energy, acc


# ---------------------------------------------------------------------------
# configurations and energies


def _positions(x, n: int) -> np.ndarray:
    a = np.asarray(getattr(x, "positions", x), dtype=float)
    if a.ndim == 1 and n == 1:
        a = a[:, None]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError(f"positions must have shape (N, {n}), got {a.shape}")
    return np.ascontiguousarray(a)


@dataclass(frozen=True, eq=False)
class ParticleConfiguration:
    """Immutable snapshot of particle positions with cached energy data.

    ``per_particle_field[j]`` is ``sum_{i != j} g(x_j, x_i)`` and
    ``cached_energy`` the full Hamiltonian at the snapshot's beta.
    """

    positions: np.ndarray = field(repr=False)
    cached_energy: float
    per_particle_field: np.ndarray = field(repr=False)

    def __post_init__(self):
        for a in (self.positions, self.per_particle_field):
            a.flags.writeable = False

    @classmethod
    def from_positions(cls, params: GasParameters, positions) -> "ParticleConfiguration":
        pos = _positions(positions, params.n).copy()
        kind, s = _kernel_code(params.kernel)
        pk, alpha, tx, tv = _pot_code(params.potential)
        f = _fields(pos, kind, s) if pos.shape[0] > 1 else np.zeros(pos.shape[0])
        e = 0.5 * params.beta * float(f.sum()) if params.beta != 0 else 0.0
        e += _pot_sum(pos, pk, alpha, tx, tv)
        return cls(pos, e, f)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def flat(self) -> np.ndarray:
        """Positions as a 1D array for n = 1, else the ``(N, n)`` array."""
        return self.positions[:, 0] if self.positions.shape[1] == 1 else self.positions


def total_energy(params: GasParameters, positions) -> float:
    """``beta * sum_{i<j} g(x_i, x_j) + sum_j V(x_j)``; ``+inf`` on collisions."""
    pos = _positions(positions, params.n)
    kind, s = _kernel_code(params.kernel)
    pk, alpha, tx, tv = _pot_code(params.potential)
    v = _pot_sum(pos, pk, alpha, tx, tv)
    if params.beta == 0 or pos.shape[0] < 2:
        return float(v)
    return float(0.5 * params.beta * _fields(pos, kind, s).sum() + v)


def delta_energy(params: GasParameters, config: ParticleConfiguration, j: int, proposal) -> float:
    """Energy change when particle ``j`` moves to ``proposal``, in O(N)."""
    if not 0 <= j < config.N:
        raise IndexError(f"particle index {j} out of range")
    y = np.atleast_1d(np.asarray(proposal, dtype=float))
    if y.shape != (params.n,):
        raise ValueError(f"proposal must be a point of R^{params.n}")
    if np.array_equal(y, config.positions[j]):
        return 0.0
    kind, s = _kernel_code(params.kernel)
    pk, alpha, tx, tv = _pot_code(params.potential)
    d, _ = _delta(config.positions, config.per_particle_field, params.beta, j, y,
                  kind, s, pk, alpha, tx, tv, np.empty(config.N))
    return float(d)


def acceptance_probability(delta: float) -> float:
    """Metropolis acceptance ``min(1, exp(-delta))`` (0 for ``delta = +inf``)."""
    if delta <= 0:
        return 1.0
    return math.exp(-delta)


# ---------------------------------------------------------------------------
# Metropolis chains


@dataclass
class ChainState:
    """Mutable chain state; :attr:`config` returns an immutable snapshot."""

    positions: np.ndarray
    fields: np.ndarray
    energy: float
    rng: np.random.Generator
    proposal_scale: float
    accept_count: int = 0
    step_count: int = 0

    @property
    def config(self) -> ParticleConfiguration:
        return ParticleConfiguration(self.positions.copy(), float(self.energy), self.fields.copy())

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.step_count if self.step_count else float("nan")


def _initial_scale(params: GasParameters) -> float:
    pot = params.potential
    if pot.is_power:
        return 1.0
    g, _ = pot.table_arrays()
    return 0.1 * (g[-1] - g[0])


def init_chain(params: GasParameters, seed=None, initial=None, proposal_scale: float | None = None) -> ChainState:
    """Chain started from ``initial`` or from i.i.d. draws of ``exp(-V)``."""
    rng = np.random.default_rng(seed)
    if initial is None:
        pos = sample_iid(params.potential, params.N, rng).positions.copy()
    else:
        pos = _positions(initial, params.n).copy()
    cfg = ParticleConfiguration.from_positions(params, pos)
    scale = proposal_scale or _initial_scale(params)
    return ChainState(np.array(cfg.positions), np.array(cfg.per_particle_field), cfg.cached_energy, rng, scale)


def _advance(state: ChainState, params: GasParameters, steps: int):
    if steps <= 0 or params.N == 0:
        return 0
    rng = state.rng
    idx = rng.integers(0, params.N, size=steps)
    normals = rng.standard_normal((steps, params.n))
    logu = np.log(rng.random(steps))
    kind, s = _kernel_code(params.kernel)
    pk, alpha, tx, tv = _pot_code(params.potential)
    e, acc = _mh_block(state.positions, state.fields, state.energy, params.beta, kind, s,
                       pk, alpha, tx, tv, idx, normals, logu, state.proposal_scale)
    state.energy = e
    state.accept_count += acc
    state.step_count += steps
    return acc


def mh_step(state: ChainState, params: GasParameters) -> ChainState:
    """One single-particle Metropolis step (in place; returns ``state``)."""
    _advance(state, params, 1)
    return state


def integrated_autocorr_time(x, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's adaptive window."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return 1.0
    y = x - x.mean()
    f = np.fft.rfft(y, n=2 * n)
    acf = np.fft.irfft(f * np.conjugate(f))[:n]
    acf /= acf[0]
    taus = 2.0 * np.cumsum(acf) - 1.0
    for m in range(1, n):
        if m >= c * taus[m]:
            return float(max(taus[m], 1.0))
    return float(max(taus[-1], 1.0))


@dataclass(frozen=True, eq=False)
class ChainRun:
    """Recorded frames of one chain plus diagnostics. Behaves as a sequence of frames."""

    frames: tuple
    acceptance_rate: float
    proposal_scale: float
    autocorr_time: float
    max_energy_drift: float
    warnings: tuple = ()

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def positions(self) -> np.ndarray:
        """All recorded positions stacked, shape ``(frames, N, n)``."""
        return np.stack([f.positions for f in self.frames])


def run_chain(params: GasParameters, steps: int, burn_in: int | None = None, thin: int | None = None,
              seed=None, initial=None, proposal_scale: float | None = None,
              target_acceptance: float = 0.3, energy_check_tol: float = 1e-9) -> ChainRun:
    """Run a random-walk Metropolis chain.

    ``steps`` counts single-particle proposals including ``burn_in``
    (default ``10 * N``). During burn-in the proposal scale is adapted
    toward ``target_acceptance``; afterwards it is frozen and a frame is
    recorded every ``thin`` steps (default ``N``). The cached energy is
    checked against a full recomputation at every frame.
    """
    N = params.N
    burn_in = 10 * max(N, 1) if burn_in is None else burn_in
    thin = max(N, 1) if thin is None else thin
    if not steps > burn_in:
        raise ValueError("steps must exceed burn_in")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    state = init_chain(params, seed, initial, proposal_scale)
    notes = []

    chunk = max(N, 50)
    done = 0
    while done < burn_in:
        k = min(chunk, burn_in - done)
        acc = _advance(state, params, k)
        rate = acc / k
        state.proposal_scale *= math.exp(2.0 * (rate - target_acceptance))
        done += k
    state.accept_count = 0
    state.step_count = 0

    frames, energies = [], []
    drift = 0.0
    nframes = (steps - burn_in) // thin
    for _ in range(nframes):
        _advance(state, params, thin)
        cfg = state.config
        if N > 1 and params.beta != 0:
            exact = total_energy(params, cfg.positions)
            err = abs(exact - state.energy)
            drift = max(drift, err)
            if err > energy_check_tol * max(1.0, abs(exact)):
                notes.append(f"energy drift {err:.3g} resynchronized")
                state.fields = _fields(state.positions, *_kernel_code(params.kernel))
                state.energy = exact
                cfg = state.config
        frames.append(cfg)
        energies.append(cfg.cached_energy)
    rate = state.acceptance_rate
    if N > 0 and not (0.1 <= rate <= 0.6):
        notes.append(f"post-burn-in acceptance {rate:.3f} outside [0.1, 0.6]")
    for msg in notes:
        log.warning(msg)
    return ChainRun(tuple(frames), float(rate), float(state.proposal_scale),
                    integrated_autocorr_time(energies), float(drift), tuple(notes))


def _seeds(seed, count: int):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(count)


def run_replicas(params: GasParameters, replicas: int, steps: int, burn_in: int | None = None,
                 thin: int | None = None, seed=None, threads: int = 1, **kw) -> list[ChainRun]:
    """Independent chains; replica ``i`` uses the ``i``-th child of ``seed``."""
    seeds = _seeds(seed, replicas)

    def one(i):
        return run_chain(params, steps, burn_in, thin, seeds[i], **kw)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(one, range(replicas)))
    return [one(i) for i in range(replicas)]


# ---------------------------------------------------------------------------
# exact samplers


def _tab_segments(pot: Potential):
    g, v = pot.table_arrays()
    a, b = g[:-1], g[1:]
    va, vb = v[:-1], v[1:]
    slope = (vb - va) / (b - a)
    h = b - a
    # mass of exp(-V) on each segment, V linear
    with np.errstate(divide="ignore", invalid="ignore"):
        mass = np.where(np.abs(slope * h) > 1e-12,
                        np.exp(-va) * (-np.expm1(-slope * h)) / slope,
                        np.exp(-va) * h)
    return a, b, slope, mass


def _tab_draw(pot: Potential, m: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the density proportional to exp(-V) on the table."""
    a, b, slope, mass = _tab_segments(pot)
    k = rng.choice(a.size, size=m, p=mass / mass.sum())
    u = rng.random(m)
    h = b[k] - a[k]
    sl = slope[k]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(np.abs(sl * h) > 1e-12,
                     -np.log1p(-u * (-np.expm1(-sl * h))) / sl,
                     u * h)
    return a[k] + t


def sample_iid(pot: Potential, N: int, seed=None, max_rejection_rounds: int = 10_000) -> ParticleConfiguration:
    """N independent draws from the density ``exp(-V) / L_0``.

    Power potentials use the exact radial law (``|x|**alpha`` is
    Gamma(n/alpha)); ``|x|**2`` uses normal draws. 1D tables use exact
    inverse transforms on each linear piece; 2D radial tables use
    rejection from the 1D table law with acceptance ``r / r_max``.
    """
    rng = np.random.default_rng(seed)
    n = pot.n
    if N == 0:
        pos = np.zeros((0, n))
    elif pot.is_power and pot.alpha == 2.0:
        pos = rng.standard_normal((N, n)) * math.sqrt(0.5)
    elif pot.is_power:
        r = rng.standard_gamma(n / pot.alpha, size=N) ** (1.0 / pot.alpha)
        if n == 1:
            pos = (r * np.where(rng.random(N) < 0.5, -1.0, 1.0))[:, None]
        else:
            d = rng.standard_normal((N, n))
            pos = d / np.linalg.norm(d, axis=1, keepdims=True) * r[:, None]
    elif n == 1:
        pos = _tab_draw(pot, N, rng)[:, None]
    else:
        g, _ = pot.table_arrays()
        rmax = g[-1]
        out = []
        have, tried = 0, 0
        for _ in range(max_rejection_rounds):
            m = max(2 * (N - have), 64)
            r = _tab_draw(pot, m, rng)
            keep = r[rng.random(m) * rmax < r]
            tried += m
            out.append(keep)
            have += keep.size
            if have >= N:
                break
            if tried > 1e4 and have / tried < 1e-4:
                raise SamplerConfigError("rejection efficiency below 1e-4")
        r = np.concatenate(out)[:N]
        phi = rng.random(N) * 2 * math.pi
        pos = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    pos = np.ascontiguousarray(pos)
    pos.flags.writeable = False
    fields = np.zeros(N)
    fields.flags.writeable = False
    # the zero-coupling energy is just the potential sum
    pk, alpha, tx, tv = _pot_code(pot)
    e = float(_pot_sum(np.asarray(pos), pk, alpha, tx, tv)) if N else 0.0
    return ParticleConfiguration(pos, e, fields)


def sample_tridiagonal_gbe(N: int, beta: float, seed=None, top: int | None = None,
                           interval: tuple | None = None) -> np.ndarray:
    """Eigenvalues of the tridiagonal beta-ensemble, scaled to weight ``exp(-x**2)``.

    The joint density of the result is proportional to
    ``prod_{i<j} |x_i - x_j|**beta * exp(-sum x_i**2)``. The diagonal is
    standard normal and the off-diagonal entries are ``chi(beta*k)/sqrt(2)``
    for ``k = N-1, ..., 1``; eigenvalues are divided by ``sqrt(2)``.
    ``top`` returns only the ``top`` largest values and ``interval`` only
    the values inside ``(lo, hi]`` (both by bisection, O(N) per value).
    """
    if not beta > 0:
        raise ValueError("beta must be > 0 for the tridiagonal model")
    rng = np.random.default_rng(seed)
    d = rng.standard_normal(N)
    if N == 1:
        return d * math.sqrt(0.5)
    dof = beta * np.arange(N - 1, 0, -1, dtype=float)
    e = np.sqrt(rng.chisquare(dof)) / math.sqrt(2.0)
    try:
        if interval is not None:
            lo, hi = (math.sqrt(2.0) * float(v) for v in interval)
            lam = eigvalsh_tridiagonal(d, e, select="v", select_range=(lo, hi),
                                       check_finite=False, lapack_driver="stebz")
        elif top is None:
            lam = eigvalsh_tridiagonal(d, e, check_finite=False)
        else:
            k = min(top, N)
            lam = eigvalsh_tridiagonal(d, e, select="i", select_range=(N - k, N - 1),
                                       check_finite=False, lapack_driver="stebz")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"tridiagonal eigensolve failed for N={N}: {exc}") from exc
    return np.sort(lam) / math.sqrt(2.0)


# ---------------------------------------------------------------------------
# derived quantities


def empirical_field(params: GasParameters, config, u) -> float:
    """Potential of the empirical measure, ``N**-1 sum_j g(u, x_j)``."""
    pos = _positions(config, params.n)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    d2 = np.sum((pos - u[None, :]) ** 2, axis=-1)
    if pos.shape[0] == 0:
        return 0.0
    if np.any(d2 == 0):
        return math.inf
    g = -0.5 * np.log(d2) if params.kernel.is_log else d2 ** (-0.5 * params.kernel.s)
    return float(g.mean())


def _field_sums(params: GasParameters, pos: np.ndarray, us: np.ndarray) -> np.ndarray:
    """``sum_i g(u, x_i)`` for each row ``u`` of ``us``."""
    d2 = np.sum((us[:, None, :] - pos[None, :, :]) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        g = -0.5 * np.log(d2) if params.kernel.is_log else d2 ** (-0.5 * params.kernel.s)
    return g.sum(axis=1)


@dataclass(frozen=True)
class RatioEstimate:
    estimate: float
    stderr: float
    replicas: int
    L0: float

    def __iter__(self):
        return iter((self.estimate, self.stderr))


def estimate_partition_ratio(params: GasParameters, replicas: int, seed=None, frames: int = 4,
                             u_per_frame: int = 256, burn_in: int | None = None,
                             thin: int | None = None, threads: int = 1) -> RatioEstimate:
    """Monte Carlo estimate of ``Z_N / Z_{N-1}``.

    Uses ``Z_N / Z_{N-1} = L_0 E[exp(-beta sum_i g(u, x_i))]`` with ``u``
    drawn from ``exp(-V) / L_0`` and ``x`` from the ``(N-1)``-particle gas
    at the same ``beta``. Each replica is an independent chain; the
    standard error is over replica means.
    """
    if replicas < 30:
        raise ValueError("need at least 30 replicas")
    L0 = partition_constant(params.potential)
    beta = params.beta
    if beta == 0 or params.N <= 1:
        return RatioEstimate(L0, 0.0, replicas, L0)
    sub = params.with_N(params.N - 1, keep_beta=True)
    M = sub.N
    burn_in = 10 * M if burn_in is None else burn_in
    thin = max(M, 1) if thin is None else thin
    seeds = _seeds(seed, replicas)

    def one(i):
        ss_chain, ss_u = seeds[i].spawn(2)
        run = run_chain(sub, burn_in + frames * thin, burn_in, thin, ss_chain)
        rng = np.random.default_rng(ss_u)
        vals = []
        for f in run:
            us = sample_iid(params.potential, u_per_frame, rng).positions
            vals.append(np.exp(-beta * _field_sums(params, f.positions, np.asarray(us))))
        return np.concatenate(vals)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            per = list(ex.map(one, range(replicas)))
    else:
        per = [one(i) for i in range(replicas)]
    means = np.array([p.mean() for p in per])
    allw = np.concatenate(per)
    if allw.max() > 0.05 * allw.sum() or means.max() > 0.25 * means.sum():
        warnings.warn("partition-ratio weights look heavy-tailed; the variance may be infinite",
                      RuntimeWarning, stacklevel=2)
    est = L0 * float(means.mean())
    err = L0 * float(means.std(ddof=1) / math.sqrt(replicas))
    return RatioEstimate(est, err, replicas, L0)


def _collect_positions(chains, n: int) -> np.ndarray:
    out = []
    for c in chains:
        if isinstance(c, ChainRun):
            out.extend(f.positions for f in c.frames)
        elif isinstance(c, ParticleConfiguration):
            out.append(c.positions)
        else:
            out.append(_positions(c, n))
    return np.concatenate(out) if out else np.zeros((0, n))


def density_of_states_histogram(params: GasParameters, chains, bins) -> Histogram:
    """Normalized histogram of every recorded particle position.

    1D gives a density on the line; 2D gives a radial density per unit
    area (annulus counts divided by total count and annulus area).
    """
    pos = _collect_positions(chains, params.n)
    if params.n == 1:
        counts, edges = np.histogram(pos[:, 0], bins=bins)
        width = np.diff(edges)
    else:
        r = np.sqrt(np.sum(pos * pos, axis=1))
        counts, edges = np.histogram(r, bins=bins)
        width = math.pi * np.diff(edges**2)
    total = max(pos.shape[0], 1)
    return Histogram(edges, counts / (total * width), counts, total)
