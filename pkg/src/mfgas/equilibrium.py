"""Equilibrium measure of the mean-field gas.

The equilibrium density solves ``mu = exp(-gamma * U[mu] - V) / L`` where
``U[mu](x) = int g(x, z) mu(dz)``. Densities are piecewise constant on the
cells of a :class:`DensityGrid`, and every kernel integral against a cell
is done by product integration (exact cell integrals of the kernel), so
the diagonal singularity never meets a quadrature node.

Three grid kinds are supported:

``line``
    1D cells on an interval; all cell integrals are closed form.
``radial``
    2D radial profiles on annuli. The log kernel uses the shell theorem,
    Riesz kernels use the ring average written with a hypergeometric
    function.
``tensor``
    2D rectangles. Exact cell integrals for the log kernel, midpoint rule
    with an equal-area disk self-cell for Riesz kernels. Memory and time
    grow like the square of the number of cells, so keep these small.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import hyp2f1

from .kernels import InteractionKernel, Potential, theta

log = logging.getLogger(__name__)

__all__ = [
    "DensityGrid",
    "EquilibriumSolution",
    "DomainError",
    "EnergyDivergenceError",
    "NonConvergenceError",
    "line_grid",
    "radial_grid",
    "tensor_grid",
    "default_grid",
    "cell_integrals",
    "potential_of_measure",
    "energy",
    "weighted_energy",
    "signed_energy",
    "reference_measure",
    "relative_entropy",
    "free_energy",
    "solve_equilibrium",
    "el_residual",
]


class DomainError(ValueError):
    """The grid does not cover the effective support of the measure."""


class EnergyDivergenceError(ValueError):
    """The energy functional is infinite for this kernel (s >= n)."""


class NonConvergenceError(RuntimeError):
    """The fixed-point iteration hit ``max_iter`` above tolerance."""

    def __init__(self, msg, residual_history, last=None):
        super().__init__(msg)
        self.residual_history = list(residual_history)
        self.last = last


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Piecewise-constant density on a grid of cells.

    ``edges`` holds one edge array for ``line``/``radial`` grids and two
    (x and y) for ``tensor`` grids. ``values`` are densities with respect
    to Lebesgue measure, one per cell, in C order for tensor grids.
    """

    kind: str
    edges: tuple
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("line", "radial", "tensor"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        for e in edges:
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ValueError("grid edges must be strictly increasing")
        if self.kind == "radial" and edges[0][0] < 0:
            raise ValueError("radial edges must start at r >= 0")
        vals = np.asarray(self.values, dtype=float).ravel()
        object.__setattr__(self, "edges", edges)
        m = int(np.prod([e.size - 1 for e in edges]))
        if vals.size == 1:
            vals = np.full(m, float(vals[0]))
        if vals.size != m:
            raise ValueError(f"expected {m} cell values, got {vals.size}")
        if np.any(vals < 0):
            raise ValueError("density values must be nonnegative")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return 1 if self.kind == "line" else 2

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        """Cell midpoints: radii for radial grids, ``(m, 2)`` for tensor."""
        if self.kind == "tensor":
            cx = 0.5 * (self.edges[0][1:] + self.edges[0][:-1])
            cy = 0.5 * (self.edges[1][1:] + self.edges[1][:-1])
            X, Y = np.meshgrid(cx, cy, indexing="ij")
            return np.stack([X.ravel(), Y.ravel()], axis=-1)
        e = self.edges[0]
        return 0.5 * (e[1:] + e[:-1])

    @property
    def cell_measures(self) -> np.ndarray:
        if self.kind == "line":
            return np.diff(self.edges[0])
        if self.kind == "radial":
            e = self.edges[0]
            return math.pi * np.diff(e * e)
        return np.outer(np.diff(self.edges[0]), np.diff(self.edges[1])).ravel()

    @property
    def mass(self) -> float:
        return float(np.dot(self.values, self.cell_measures))

    @property
    def extent(self) -> float:
        """Largest distance from the origin covered by the grid."""
        return float(max(np.max(np.abs(e)) for e in self.edges))

    def with_values(self, values) -> "DensityGrid":
        return DensityGrid(self.kind, self.edges, values)

    def normalized(self) -> "DensityGrid":
        return self.with_values(self.values / self.mass)

    def node_points(self) -> np.ndarray:
        """Nodes as points of R^n, shape ``(m, n)``."""
        nodes = self.nodes
        if self.kind == "tensor":
            return nodes
        if self.kind == "radial":
            return np.stack([nodes, np.zeros_like(nodes)], axis=-1)
        return nodes[:, None]

    def node_radius(self) -> np.ndarray:
        p = self.node_points()
        return np.sqrt(np.sum(p * p, axis=-1))

    def boundary_mass(self) -> float:
        """Mass carried by the outermost layer of cells."""
        m = self.values * self.cell_measures
        if self.kind == "line":
            return float(m[0] + m[-1])
        if self.kind == "radial":
            return float(m[-1])
        shape = (self.edges[0].size - 1, self.edges[1].size - 1)
        mm = m.reshape(shape)
        return float(mm[0].sum() + mm[-1].sum() + mm[1:-1, 0].sum() + mm[1:-1, -1].sum())

    def evaluate(self, x) -> np.ndarray:
        """Density at arbitrary points (0 outside the grid)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "line":
            e = self.edges[0]
            idx = np.searchsorted(e, x, side="right") - 1
            ok = (idx >= 0) & (idx < self.size)
            return np.where(ok, self.values[np.clip(idx, 0, self.size - 1)], 0.0)
        if self.kind == "radial":
            r = np.abs(x) if x.ndim == 0 or x.shape[-1] != 2 else np.sqrt(np.sum(x * x, axis=-1))
            e = self.edges[0]
            idx = np.searchsorted(e, r, side="right") - 1
            ok = (idx >= 0) & (idx < self.size)
            return np.where(ok, self.values[np.clip(idx, 0, self.size - 1)], 0.0)
        ex, ey = self.edges
        ix = np.searchsorted(ex, x[..., 0], side="right") - 1
        iy = np.searchsorted(ey, x[..., 1], side="right") - 1
        ok = (ix >= 0) & (ix < ex.size - 1) & (iy >= 0) & (iy < ey.size - 1)
        flat = np.clip(ix, 0, ex.size - 2) * (ey.size - 1) + np.clip(iy, 0, ey.size - 2)
        return np.where(ok, self.values[flat], 0.0)


def line_grid(a: float, b: float, m: int, values=1.0) -> DensityGrid:
    return DensityGrid("line", (np.linspace(a, b, m + 1),), values)


def radial_grid(rmax: float, m: int, values=1.0) -> DensityGrid:
    return DensityGrid("radial", (np.linspace(0.0, rmax, m + 1),), values)


def tensor_grid(a: float, b: float, m: int, values=1.0) -> DensityGrid:
    e = np.linspace(a, b, m + 1)
    return DensityGrid("tensor", (e, e), values)


def default_grid(kernel: InteractionKernel, pot: Potential, gamma: float, m: int = 800,
                 kind: str | None = None, cutoff: float = 1e-12) -> DensityGrid:
    """Grid covering the region where ``exp(-V + (gamma+1) theta)`` exceeds
    ``cutoff`` times its maximum (the tilt only counts for the log kernel)."""
    kappa = gamma + 1.0 if kernel.is_log else 0.0
    if pot.family == "tabulated":
        g, _ = pot.table_arrays()
        lo, hi = g[0], g[-1]
    else:
        r = np.linspace(0.0, 1.0, 2001)
        while True:
            f = pot.radial(r) - kappa * np.log1p(r)
            if f[-1] - f.min() > -math.log(cutoff):
                break
            r = r * 2.0
        k = int(np.argmax(f - f.min() > -math.log(cutoff)))
        hi = float(r[k])
        lo = -hi
    kind = kind or ("line" if pot.n == 1 else "radial")
    if kind == "line":
        return line_grid(lo, hi, m)
    if kind == "radial":
        return radial_grid(max(abs(lo), hi), m)
    return tensor_grid(-max(abs(lo), hi), max(abs(lo), hi), m)


# ---------------------------------------------------------------------------
# cell integrals of the kernel


def _line_F(kernel: InteractionKernel, t):
    """Antiderivative of the 1D kernel profile, vanishing at 0."""
    t = np.asarray(t, dtype=float)
    at = np.abs(t)
    if kernel.is_log:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = t - t * np.log(at)
        return np.where(at == 0, 0.0, out)
    s = kernel.s
    return np.sign(t) * at ** (1.0 - s) / (1.0 - s)


def _line_G(kernel: InteractionKernel, t):
    """Second antiderivative of the 1D kernel profile."""
    t = np.asarray(t, dtype=float)
    at = np.abs(t)
    if kernel.is_log:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -0.5 * t * t * np.log(at) + 0.75 * t * t
        return np.where(at == 0, 0.0, out)
    s = kernel.s
    return at ** (2.0 - s) / ((1.0 - s) * (2.0 - s))


def _ring_log_cells(rho, a, b):
    """int_a^b -log(max(rho, r)) 2 pi r dr, broadcast over rho and cells."""
    def A(r):
        with np.errstate(divide="ignore", invalid="ignore"):
            v = math.pi * (0.5 * r * r - r * r * np.log(r))
        return np.where(r == 0, 0.0, v)

    c = np.clip(rho, a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        inner = np.where(c > a, -np.log(rho) * math.pi * (c * c - a * a), 0.0)
    return inner + A(b) - A(c)


def _ring_riesz(s, rho, r):
    """Angular average of |x - z|^-s over the circle |z| = r, |x| = rho."""
    rho = np.asarray(rho, dtype=float)
    r = np.asarray(r, dtype=float)
    tot = rho + r
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(tot > 0, 4 * rho * r / tot**2, 0.0)
        out = tot ** (-s) * hyp2f1(s / 2, 0.5, 1.0, np.minimum(z, 1.0))
    return np.where(tot == 0, np.inf, out)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _ring_riesz_cells(s, rho, a, b):
    """int_a^b ring(rho, r) 2 pi r dr for all (point, cell) pairs."""
    rho = np.asarray(rho, dtype=float)[:, None]
    a = np.asarray(a)[None, :]
    b = np.asarray(b)[None, :]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    out = np.zeros(np.broadcast(rho, a).shape)
    for xq, wq in zip(_GL_X, _GL_W):
        rq = mid + half * xq
        out += wq * half * _ring_riesz(s, rho, rq) * 2 * math.pi * rq
    near = (rho >= a - 2 * half) & (rho <= b + 2 * half)
    for i, j in zip(*np.nonzero(near)):
        p = float(rho[i, 0])
        lo, hi = float(a[0, j]), float(b[0, j])
        pts = [p] if lo < p < hi else None
        out[i, j] = quad(lambda r: float(_ring_riesz(s, p, r)) * 2 * math.pi * r, lo, hi,
                         points=pts, limit=200)[0]
    return out


def _rect_log_F(x, y):
    """Antiderivative of log(x^2 + y^2) in both variables, zero on the axes."""
    r2 = x * x + y * y
    with np.errstate(divide="ignore", invalid="ignore"):
        v = (x * y * np.log(r2) - 3 * x * y
             + np.where(x == 0, 0.0, x * x * np.arctan(y / x))
             + np.where(y == 0, 0.0, y * y * np.arctan(x / y)))
    return np.where(r2 == 0, 0.0, v)


def cell_integrals(kernel: InteractionKernel, grid: DensityGrid, points) -> np.ndarray:
    """Matrix ``K[p, j] = int_{cell j} g(x_p, z) dz``.

    ``points`` are scalars for line grids, radii for radial grids and
    ``(P, 2)`` arrays for tensor grids.
    """
    if grid.n != kernel.n:
        raise ValueError(f"kernel dimension {kernel.n} does not match grid dimension {grid.n}")
    if kernel.family == "riesz" and kernel.s >= kernel.n:
        raise EnergyDivergenceError("Riesz exponent must satisfy s < n")
    if grid.kind == "line":
        x = np.asarray(points, dtype=float).reshape(-1)[:, None]
        e = grid.edges[0]
        return _line_F(kernel, x - e[None, :-1]) - _line_F(kernel, x - e[None, 1:])
    if grid.kind == "radial":
        rho = np.asarray(points, dtype=float)
        if rho.ndim == 2:
            rho = np.sqrt(np.sum(rho * rho, axis=-1))
        rho = rho.reshape(-1)
        e = grid.edges[0]
        if kernel.is_log:
            return _ring_log_cells(rho[:, None], e[None, :-1], e[None, 1:])
        return _ring_riesz_cells(kernel.s, rho, e[:-1], e[1:])
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ex, ey = grid.edges
    if kernel.is_log:
        X0 = ex[None, :-1, None] - pts[:, 0, None, None]
        X1 = ex[None, 1:, None] - pts[:, 0, None, None]
        Y0 = ey[None, None, :-1] - pts[:, 1, None, None]
        Y1 = ey[None, None, 1:] - pts[:, 1, None, None]
        val = _rect_log_F(X1, Y1) - _rect_log_F(X0, Y1) - _rect_log_F(X1, Y0) + _rect_log_F(X0, Y0)
        return (-0.5 * val).reshape(pts.shape[0], -1)
    s = kernel.s
    centers = grid.nodes
    area = grid.cell_measures
    d = np.sqrt(np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        K = area[None, :] * d ** (-s)
    inside = (
        (pts[:, 0, None] >= ex[None, :-1].repeat(ey.size - 1))
        & (pts[:, 0, None] < ex[None, 1:].repeat(ey.size - 1))
        & (pts[:, 1, None] >= np.tile(ey[:-1], ex.size - 1)[None, :])
        & (pts[:, 1, None] < np.tile(ey[1:], ex.size - 1)[None, :])
    )
    radius = np.sqrt(area / math.pi)
    disk = 2 * math.pi * radius ** (2 - s) / (2 - s)
    return np.where(inside, disk[None, :], K)


def _pair_integrals(kernel: InteractionKernel, grid: DensityGrid) -> np.ndarray:
    """Matrix ``P[i, j] = int_{cell i} int_{cell j} g(x, z) dz dx``."""
    if kernel.family == "riesz" and kernel.s >= kernel.n:
        raise EnergyDivergenceError("energy diverges for s >= n")
    if grid.kind == "line":
        e = grid.edges[0]
        a, b = e[:-1], e[1:]
        G = lambda t: _line_G(kernel, t)  # noqa: E731
        bi, ai = b[:, None], a[:, None]
        bj, aj = b[None, :], a[None, :]
        return G(bi - aj) - G(ai - aj) - G(bi - bj) + G(ai - bj)
    if grid.kind == "radial":
        e = grid.edges[0]
        a, b = e[:-1], e[1:]
        half, mid = 0.5 * (b - a), 0.5 * (b + a)
        P = np.zeros((grid.size, grid.size))
        for xq, wq in zip(_GL_X, _GL_W):
            rq = mid + half * xq
            P += (wq * half * 2 * math.pi * rq)[:, None] * cell_integrals(kernel, grid, rq)
        return 0.5 * (P + P.T)
    K = cell_integrals(kernel, grid, grid.nodes)
    P = grid.cell_measures[:, None] * K
    return 0.5 * (P + P.T)


# ---------------------------------------------------------------------------
# functionals


def _check_normalized(mu: DensityGrid, kernel: InteractionKernel, tol: float = 1e-6,
                      boundary_eps: float = 1e-6):
    if abs(mu.mass - 1.0) > tol:
        raise DomainError(f"measure has mass {mu.mass:.6g}, expected 1")
    if kernel.is_log and mu.boundary_mass() > boundary_eps:
        raise DomainError(
            f"log-kernel potential needs the measure to vanish at the grid edge "
            f"(boundary mass {mu.boundary_mass():.3g})")


def potential_of_measure(kernel: InteractionKernel, mu: DensityGrid, x, check: bool = True):
    """``U[mu](x) = int g(x, z) mu(dz)`` by exact cell integrals."""
    if check:
        _check_normalized(mu, kernel)
    x_arr = np.asarray(x, dtype=float)
    if mu.kind == "tensor":
        pts = x_arr.reshape(-1, 2)
        out = cell_integrals(kernel, mu, pts) @ mu.values
        return float(out[0]) if x_arr.ndim == 1 else out.reshape(x_arr.shape[:-1])
    if mu.kind == "radial" and x_arr.ndim >= 1 and x_arr.shape[-1] == 2:
        x_arr = np.sqrt(np.sum(x_arr * x_arr, axis=-1))
    out = cell_integrals(kernel, mu, x_arr.reshape(-1)) @ mu.values
    return float(out[0]) if x_arr.ndim == 0 else out.reshape(x_arr.shape)


def energy(kernel: InteractionKernel, mu: DensityGrid, pairs: np.ndarray | None = None) -> float:
    """``int int g(x, z) mu(dz) mu(dx)`` with exact cell-pair integrals."""
    P = _pair_integrals(kernel, mu) if pairs is None else pairs
    return float(mu.values @ P @ mu.values)


def signed_energy(kernel: InteractionKernel, grid: DensityGrid, f) -> float:
    """Energy ``int int g f f`` of a signed cell-constant density ``f``."""
    f = np.asarray(f, dtype=float).ravel()
    if f.size != grid.size:
        raise ValueError("f must have one value per cell")
    return float(f @ _pair_integrals(kernel, grid) @ f)


def _theta_cells(kernel: InteractionKernel, grid: DensityGrid) -> np.ndarray:
    if not kernel.is_log:
        return np.zeros(grid.size)
    return np.asarray(theta(grid.node_points(), grid.n), dtype=float)


def weighted_energy(kernel: InteractionKernel, mu: DensityGrid, pairs: np.ndarray | None = None) -> float:
    """Energy of ``g(x, z) + theta(x) + theta(z)``; equals ``energy`` for Riesz."""
    t = _theta_cells(kernel, mu)
    m = mu.values * mu.cell_measures
    return energy(kernel, mu, pairs) + 2.0 * float(m.sum() * np.dot(t, m))


def relative_entropy(mu: DensityGrid, nu: DensityGrid) -> float:
    """Kullback-Leibler divergence of ``mu`` from ``nu`` on a shared grid."""
    if mu.size != nu.size or mu.kind != nu.kind:
        raise ValueError("relative entropy needs both measures on the same grid")
    p, q, w = mu.values, nu.values, mu.cell_measures
    if np.any((p > 0) & (q <= 0)):
        return math.inf
    pos = p > 0
    return float(np.sum(w[pos] * p[pos] * np.log(p[pos] / q[pos])))


def reference_measure(kernel: InteractionKernel, pot: Potential, gamma: float, grid: DensityGrid) -> DensityGrid:
    """``exp(-V + gamma * theta)`` normalized on the grid (``mu_0`` for Riesz)."""
    v = np.asarray(pot.radial(_pot_coord(pot, grid)), dtype=float) - gamma * _theta_cells(kernel, grid)
    w = np.exp(-(v - np.min(v)))
    return grid.with_values(w).normalized()


def free_energy(kernel: InteractionKernel, pot: Potential, mu: DensityGrid, gamma: float,
                pairs: np.ndarray | None = None) -> float:
    """``(gamma/2) * weighted_energy(mu) + H(mu | nu_gamma)``."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    nu = reference_measure(kernel, pot, gamma, mu)
    ent = relative_entropy(mu, nu)
    if gamma == 0 or math.isinf(ent):
        return ent
    return 0.5 * gamma * weighted_energy(kernel, mu, pairs) + ent


# ---------------------------------------------------------------------------
# solver


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    density: DensityGrid
    L_gamma: float
    U: np.ndarray = field(repr=False)
    residual: float
    iterations: int
    gamma: float
    residual_history: tuple = field(default=(), repr=False)
    free_energy_history: tuple = field(default=(), repr=False)
    damping: float = 0.5

    def density_at(self, x):
        return self.density.evaluate(x)

    def tail_constants(self, kernel: InteractionKernel, pot: Potential) -> tuple[float, float]:
        """Sup-ratios ``max exp(-V)/mu`` and ``max mu/exp(-V + gamma theta)``
        over the grid nodes."""
        grid = self.density
        v = np.asarray(pot.radial(_pot_coord(pot, grid)), dtype=float)
        vt = v - self.gamma * _theta_cells(kernel, grid)
        mu = grid.values
        pos = mu > 0
        c1 = float(np.max(np.exp(-v[pos]) / mu[pos]))
        c2 = float(np.max(mu[pos] / np.exp(-vt[pos])))
        return c1, c2


def _pot_coord(pot: Potential, grid: DensityGrid) -> np.ndarray:
    if grid.kind == "line":
        return grid.nodes
    return grid.node_radius()


def _fixed_point_map(w_neg, U, gamma, m):
    """Return (T(mu), Z(mu)) given -V at nodes."""
    e = w_neg - gamma * U
    shift = np.max(e[np.isfinite(e)])
    t = np.exp(e - shift)
    Z = float(np.dot(t, m))
    return t / Z, Z * math.exp(shift)


def solve_equilibrium(kernel: InteractionKernel, pot: Potential, gamma: float,
                      grid: DensityGrid | None = None, damping: float = 0.5,
                      tol: float = 1e-10, max_iter: int = 2000,
                      boundary_eps: float = 1e-9) -> EquilibriumSolution:
    """Damped Picard iteration ``mu <- (1 - eta) mu + eta T(mu)``.

    ``eta`` is halved whenever the residual grows. Raises
    :class:`NonConvergenceError` after ``max_iter`` iterations and
    :class:`DomainError` when the solution carries more than
    ``boundary_eps`` mass in the outermost cells.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    if pot.n != kernel.n:
        raise ValueError("kernel and potential dimensions differ")
    grid = grid if grid is not None else default_grid(kernel, pot, gamma)
    m = grid.cell_measures
    w_neg = -np.asarray(pot.radial(_pot_coord(pot, grid)), dtype=float)

    if gamma == 0:
        mu, L = _fixed_point_map(w_neg, np.zeros(grid.size), 0.0, m)
        sol_grid = grid.with_values(mu)
        U = cell_integrals(kernel, grid, _nodes_arg(grid)) @ mu
        _check_boundary(sol_grid, boundary_eps)
        return EquilibriumSolution(sol_grid, L, U, 0.0, 1, 0.0, (0.0,), (0.0,), damping)

    K = cell_integrals(kernel, grid, _nodes_arg(grid))
    pairs = _pair_integrals(kernel, grid)
    mu = np.exp(w_neg - np.max(w_neg))
    mu /= np.dot(mu, m)
    eta = damping
    res_hist, fe_hist = [], []
    prev = math.inf
    for it in range(1, max_iter + 1):
        U = K @ mu
        T, Z = _fixed_point_map(w_neg, U, gamma, m)
        res = float(np.max(np.abs(mu - T)))
        res_hist.append(res)
        fe_hist.append(free_energy(kernel, pot, grid.with_values(mu), gamma, pairs))
        if res <= tol:
            sol_grid = grid.with_values(mu)
            _check_boundary(sol_grid, boundary_eps)
            log.debug("equilibrium converged in %d iterations (residual %.3g)", it, res)
            return EquilibriumSolution(sol_grid, Z, U, res, it, float(gamma),
                                       tuple(res_hist), tuple(fe_hist), damping)
        if res > prev:
            eta *= 0.5
        prev = res
        mu = (1 - eta) * mu + eta * T
        mu /= np.dot(mu, m)
    raise NonConvergenceError(
        f"equilibrium iteration did not reach tol={tol:g} in {max_iter} steps "
        f"(last residual {res_hist[-1]:.3g})", res_hist, grid.with_values(mu))


def _nodes_arg(grid: DensityGrid):
    return grid.nodes


def _check_boundary(grid: DensityGrid, eps: float):
    if grid.boundary_mass() > eps:
        raise DomainError(
            f"boundary cells carry mass {grid.boundary_mass():.3g} > {eps:g}; enlarge the domain")


def el_residual(kernel: InteractionKernel, pot: Potential, solution: EquilibriumSolution) -> float:
    """Recompute the potential from scratch and return
    ``max |mu - exp(-gamma U - V) / L|`` over the nodes."""
    grid = solution.density
    U = cell_integrals(kernel, grid, _nodes_arg(grid)) @ grid.values
    v = np.asarray(pot.radial(_pot_coord(pot, grid)), dtype=float)
    target = np.exp(-solution.gamma * U - v) / solution.L_gamma
    return float(np.max(np.abs(grid.values - target)))
