"""Two-body interaction kernels, confining potentials and the log tilt.

All kernels here are radial: they depend on ``|x - u|`` only, and all
potentials depend on ``|x|`` only (or on ``x`` itself for 1D tables).
Points are numpy arrays whose trailing axis has length ``n``; in one
dimension plain floats are accepted as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "DimensionError",
    "SingularPointError",
    "InteractionKernel",
    "Potential",
    "eval_kernel",
    "eval_kernel_split",
    "theta",
    "eval_potential",
    "grad_potential",
    "hessian_norm",
    "unit_ball_volume",
    "riesz_high_part_integral",
    "partition_constant",
]


class DimensionError(ValueError):
    """Point dimension does not match the kernel or potential dimension."""


class SingularPointError(ValueError):
    """Derivative requested where the potential is not differentiable."""


def unit_ball_volume(n: int) -> float:
    """Lebesgue volume of the unit ball in R^n."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _points(p, n: int) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if n == 1 and (a.ndim == 0 or a.shape[-1] != 1):
        return a[..., None]
    if a.ndim == 0 or a.shape[-1] != n:
        raise DimensionError(f"expected points in R^{n}, got shape {a.shape}")
    return a


def _scalar(a: np.ndarray):
    return float(a) if a.ndim == 0 else a


@dataclass(frozen=True)
class InteractionKernel:
    """Radial two-body kernel.

    Parameters
    ----------
    family : {"riesz", "log"}
        ``riesz`` is ``|x - u|**-s`` with ``0 < s < n``; ``log`` is
        ``-log|x - u|``.
    n : int
        Ambient dimension.
    s : float, optional
        Riesz exponent; ignored for the log kernel.
    """

    family: str
    n: int = 1
    s: float | None = None

    def __post_init__(self):
        if self.family not in ("riesz", "log"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.n < 1:
            raise ValueError("dimension n must be a positive integer")
        if self.family == "riesz":
            if self.s is None or not (0.0 < self.s < self.n):
                raise ValueError(f"s must be < n and > 0 for a Riesz kernel (s={self.s}, n={self.n})")

    @property
    def is_log(self) -> bool:
        return self.family == "log"

    def profile(self, r):
        """Kernel as a function of the distance ``r >= 0`` (``+inf`` at 0)."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            if self.is_log:
                out = -np.log(r)
            else:
                out = r ** (-self.s)
        return _scalar(out)

    def tilt(self, x):
        """The tilt used in the weighted energy; identically zero for Riesz."""
        if self.is_log:
            return theta(x, self.n)
        x = _points(x, self.n)
        return _scalar(np.zeros(x.shape[:-1]))


def eval_kernel(kernel: InteractionKernel, u, x):
    """Evaluate ``g(u, x)``; returns ``+inf`` on the diagonal."""
    u = _points(u, kernel.n)
    x = _points(x, kernel.n)
    r = np.sqrt(np.sum((x - u) ** 2, axis=-1))
    return kernel.profile(r)


def eval_kernel_split(kernel: InteractionKernel, u, x, k: float):
    """Truncation split ``g = min(g, k) + (g - min(g, k))``.

    The low part is continuous and bounded by ``k``; the high part is
    nonnegative and supported near the diagonal.
    """
    if not k > 0:
        raise ValueError("truncation level k must be positive")
    g = np.asarray(eval_kernel(kernel, u, x), dtype=float)
    low = np.minimum(g, k)
    with np.errstate(invalid="ignore"):
        high = np.where(np.isinf(g), np.inf, g - low)
    return _scalar(low), _scalar(high)


def riesz_high_part_integral(kernel: InteractionKernel, k: float, p: float) -> float:
    """Closed form of the integral over R^n of ``high(0, x, k) ** p``.

    Only the part of the ball ``|x| <= k**(-1/s)`` contributes, where the
    high part equals ``|x|**-s - k``.
    """
    if kernel.is_log:
        raise ValueError("closed form is available for Riesz kernels only")
    n, s = kernel.n, kernel.s
    if not p < n / s:
        raise ValueError("need p < n/s for integrability")
    rmax = k ** (-1.0 / s)
    surface = n * unit_ball_volume(n)
    from scipy.integrate import quad

    val, _ = quad(lambda r: (r ** (-s) - k) ** p * r ** (n - 1), 0.0, rmax, limit=200)
    return surface * val


def theta(x, n: int = 1):
    """Tilt function ``log(1 + |x|)``."""
    x = _points(x, n)
    return _scalar(np.log1p(np.sqrt(np.sum(x * x, axis=-1))))


@dataclass(frozen=True)
class Potential:
    """Confining potential.

    ``power`` is ``|x|**alpha``, ``gaussian`` is ``|x|**2`` and
    ``tabulated`` linearly interpolates ``values`` on ``grid``. Tables are
    functions of ``x`` in 1D and of ``|x|`` in 2D; outside the table the
    potential is ``+inf``. Tables are shifted so that their minimum is 0.
    """

    family: str
    n: int = 1
    alpha: float = 2.0
    grid: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in ("power", "gaussian", "tabulated"):
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.family == "gaussian":
            object.__setattr__(self, "alpha", 2.0)
        if self.family == "power" and not self.alpha > 0:
            raise ValueError("potential.alpha must be > 0")
        if self.family == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.ndim != 1 or g.shape != v.shape or g.size < 3:
                raise ValueError("tabulated potential needs matching 1D grid/values with >= 3 nodes")
            if np.any(np.diff(g) <= 0):
                raise ValueError("tabulated grid must be strictly increasing")
            if self.n == 2 and g[0] < 0:
                raise ValueError("2D tabulated potentials are radial; grid must be >= 0")
            object.__setattr__(self, "grid", tuple(g))
            object.__setattr__(self, "values", tuple(v - v.min()))

    @classmethod
    def power(cls, alpha: float, n: int = 1) -> "Potential":
        return cls("power", n=n, alpha=alpha)

    @property
    def is_power(self) -> bool:
        return self.family in ("power", "gaussian")

    @property
    def step(self) -> float:
        """Finite-difference step for tabulated derivatives: one table cell,
        so second differences at nodes see exactly one kink."""
        g = np.asarray(self.grid)
        return float(np.min(np.diff(g)))

    def table_arrays(self):
        return np.asarray(self.grid, dtype=float), np.asarray(self.values, dtype=float)

    def radial(self, r):
        """Potential as a function of ``|x|`` (or of ``x`` for 1D tables)."""
        r = np.asarray(r, dtype=float)
        if self.is_power:
            return np.abs(r) ** self.alpha
        g, v = self.table_arrays()
        out = np.interp(r, g, v)
        return np.where((r < g[0]) | (r > g[-1]), np.inf, out)

    def tilted(self, kappa: float):
        """Return the callable ``x -> V(x) - kappa * theta(x)``."""

        def f(x):
            return eval_potential(self, x) - kappa * np.asarray(theta(x, self.n))

        return f


def _coord(pot: Potential, x):
    x = _points(x, pot.n)
    if pot.family == "tabulated" and pot.n == 1:
        return x, x[..., 0]
    return x, np.sqrt(np.sum(x * x, axis=-1))


def eval_potential(pot: Potential, x):
    _, r = _coord(pot, x)
    return _scalar(pot.radial(r))


def grad_potential(pot: Potential, x):
    """Gradient of V; shape ``(..., n)`` (a float in 1D for scalar input)."""
    xa, r = _coord(pot, x)
    if pot.is_power:
        a = pot.alpha
        if np.any(r == 0):
            if a < 2:
                raise SingularPointError(f"|x|**{a} is not differentiable at 0")
            out = np.zeros_like(xa)
            nz = r > 0
            out[nz] = a * (r[nz] ** (a - 2))[..., None] * xa[nz]
        else:
            out = a * (r ** (a - 2))[..., None] * xa
    else:
        h = pot.step
        dv = (pot.radial(r + h) - pot.radial(r - h)) / (2 * h)
        if pot.n == 1:
            out = dv[..., None]
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                unit = np.where(r[..., None] > 0, xa / r[..., None], 0.0)
            out = dv[..., None] * unit
    if pot.n == 1 and np.asarray(x).ndim == 0:
        return float(out[..., 0])
    return out


def hessian_norm(pot: Potential, x):
    """Hilbert-Schmidt norm of the Hessian of V."""
    xa, r = _coord(pot, x)
    n = pot.n
    if pot.is_power:
        a = pot.alpha
        if np.any(r == 0) and a < 2:
            raise SingularPointError(f"|x|**{a} has no Hessian at 0")
        c = a * math.sqrt((a - 1) ** 2 + n - 1)
        with np.errstate(divide="ignore"):
            out = c * r ** (a - 2)
        if a == 2:
            out = np.full_like(r, c)
        return _scalar(out)
    # radial V(r): eigenvalues V'' (radial) and V'/r (n-1 times)
    h = pot.step
    v0, vp, vm = pot.radial(r), pot.radial(r + h), pot.radial(r - h)
    d2 = (vp - 2 * v0 + vm) / h**2
    if n == 1:
        return _scalar(np.abs(d2))
    d1 = (vp - vm) / (2 * h)
    with np.errstate(invalid="ignore", divide="ignore"):
        tang = np.where(r > 0, d1 / r, d2)
    return _scalar(np.sqrt(d2**2 + (n - 1) * tang**2))


def partition_constant(pot: Potential, kappa: float = 0.0, kernel: InteractionKernel | None = None) -> float:
    """Integral over R^n of ``exp(-V + kappa * theta)``.

    With ``kappa = 0`` this is the normalization of the reference measure
    at zero coupling. The tilt only enters for the log kernel.
    """
    from scipy.integrate import quad

    n = pot.n
    if kappa == 0 and pot.is_power:
        a = pot.alpha
        return float(n * unit_ball_volume(n) * gamma_fn(n / a) / a)
    use_tilt = kernel is None or kernel.is_log

    def f(r):
        t = kappa * math.log1p(abs(r)) if use_tilt else 0.0
        return math.exp(-float(pot.radial(r)) + t)

    if pot.family == "tabulated":
        g, _ = pot.table_arrays()
        lo, hi = g[0], g[-1]
        if n == 1:
            return quad(f, lo, hi, limit=400, points=list(g[1:-1][:50]))[0]
        return 2 * math.pi * quad(lambda r: f(r) * r, lo, hi, limit=400)[0]
    if n == 1:
        return 2 * quad(f, 0, np.inf, limit=200)[0]
    surface = n * unit_ball_volume(n)
    return surface * quad(lambda r: f(r) * r ** (n - 1), 0, np.inf, limit=200)[0]
