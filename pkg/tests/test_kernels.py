import math

import numpy as np
import pytest
from scipy.integrate import quad

from mfgas.kernels import (
    DimensionError, InteractionKernel, Potential, SingularPointError, eval_kernel,
    eval_kernel_split, eval_potential, grad_potential, hessian_norm, partition_constant,
    riesz_high_part_integral, theta, unit_ball_volume,
)


def test_riesz_value():
    assert eval_kernel(InteractionKernel("riesz", 2, 1.0), [0, 0], [2, 0]) == 0.5
    assert eval_kernel(InteractionKernel("riesz", 1, 0.5), 0.0, 4.0) == pytest.approx(0.5)


def test_log_value_at_unit_distance():
    assert eval_kernel(InteractionKernel("log"), 0.0, 1.0) == 0.0


def test_diagonal_is_infinite():
    assert eval_kernel(InteractionKernel("riesz", 1, 0.5), 1.0, 1.0) == math.inf
    assert eval_kernel(InteractionKernel("log"), 1.0, 1.0) == math.inf


def test_riesz_needs_s_below_n():
    with pytest.raises(ValueError, match="s must be < n"):
        InteractionKernel("riesz", 1, 1.5)
    with pytest.raises(ValueError):
        InteractionKernel("riesz", 2, 0.0)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        eval_kernel(InteractionKernel("log", 2), [0.0, 0.0], [1.0, 2.0, 3.0])


def test_split_examples():
    k = InteractionKernel("riesz", 2, 1.0)
    assert eval_kernel_split(k, [0, 0], [0.1, 0], 5.0) == pytest.approx((5.0, 5.0))
    assert eval_kernel_split(k, [0, 0], [2, 0], 5.0) == (0.5, 0.0)
    with pytest.raises(ValueError):
        eval_kernel_split(k, [0, 0], [2, 0], 0.0)


def test_split_at_diagonal():
    low, high = eval_kernel_split(InteractionKernel("log"), 0.0, 0.0, 3.0)
    assert low == 3.0 and high == math.inf


def test_high_part_integral_exact():
    # (|x|**-1/2 - 1)_+ on [-1, 1] integrates to 2
    k = InteractionKernel("riesz", 1, 0.5)
    assert riesz_high_part_integral(k, 1.0, 1.0) == pytest.approx(2.0, rel=1e-10)


def test_high_part_integral_against_direct_quadrature():
    k = InteractionKernel("riesz", 2, 1.0)
    kk, p = 2.0, 1.5
    direct = 2 * math.pi * quad(lambda r: max(r ** -1.0 - kk, 0.0) ** p * r, 0, 1 / kk)[0]
    assert riesz_high_part_integral(k, kk, p) == pytest.approx(direct, rel=1e-8)
    # dominated by the integral of |x|**-(s p) over the support ball
    bound = unit_ball_volume(2) * 2 / (2 - 1.0 * p) * kk ** -(2 / 1.0 - p)
    assert riesz_high_part_integral(k, kk, p) <= bound


def test_theta_values():
    assert theta(0.0) == 0.0
    assert theta(math.e - 1) == pytest.approx(1.0)
    assert theta([3.0, 4.0], 2) == pytest.approx(math.log(6.0))


def test_log_kernel_tilt_lower_bound(rng):
    u = rng.standard_cauchy(100_000) * 10
    x = rng.standard_cauchy(100_000) * 10
    g = eval_kernel(InteractionKernel("log"), u, x)
    assert np.all(g + theta(u) + theta(x) >= -1e-12)


def test_power_potential_examples():
    V = Potential.power(2.0)
    assert eval_potential(V, 3.0) == 9.0
    assert grad_potential(V, 3.0) == 6.0
    assert hessian_norm(V, 3.0) == 2.0
    V2 = Potential.power(2.0, 2)
    assert hessian_norm(V2, [3.0, 4.0]) == pytest.approx(2 * math.sqrt(2))
    assert grad_potential(Potential.power(1.0), -2.0) == -1.0


def test_singular_point_for_small_alpha():
    with pytest.raises(SingularPointError):
        grad_potential(Potential.power(1.0), 0.0)
    with pytest.raises(SingularPointError):
        hessian_norm(Potential.power(1.5, 2), [0.0, 0.0])
    assert grad_potential(Potential.power(2.0), 0.0) == 0.0


def test_alpha_must_be_positive():
    with pytest.raises(ValueError, match="potential.alpha"):
        Potential.power(-1.0)


def test_gaussian_is_quadratic():
    V = Potential("gaussian")
    assert eval_potential(V, 1.5) == 2.25


def test_hessian_norm_matches_finite_differences():
    V = Potential.power(3.0, 2)
    x = np.array([0.7, -1.1])
    h = 1e-4
    H = np.zeros((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        H[i] = (grad_potential(V, x + e) - grad_potential(V, x - e)) / (2 * h)
    assert hessian_norm(V, x) == pytest.approx(np.linalg.norm(H), rel=1e-6)


def test_tabulated_potential():
    g = np.linspace(-4, 4, 801)
    V = Potential("tabulated", grid=tuple(g), values=tuple(g**2 + 3.0))
    assert eval_potential(V, 0.0) == pytest.approx(0.0)  # shifted to min 0
    assert eval_potential(V, 1.0) == pytest.approx(1.0, abs=1e-4)
    assert eval_potential(V, 5.0) == math.inf
    assert grad_potential(V, 1.0) == pytest.approx(2.0, abs=1e-3)
    assert hessian_norm(V, 1.0) == pytest.approx(2.0, abs=1e-3)


def test_tilted_agrees_pointwise():
    V = Potential.power(2.0)
    f = V.tilted(1.7)
    for x in (-3.0, 0.0, 0.4, 2.5):
        assert f(x) == pytest.approx(eval_potential(V, x) - 1.7 * theta(x))


@pytest.mark.parametrize("alpha,n,expected", [
    (2.0, 1, math.sqrt(math.pi)),
    (1.0, 1, 2.0),
    (2.0, 2, math.pi),
])
def test_partition_constant_closed_form(alpha, n, expected):
    assert partition_constant(Potential.power(alpha, n)) == pytest.approx(expected, rel=1e-12)


def test_partition_constant_tilted_quadrature():
    V = Potential.power(2.0)
    direct = quad(lambda x: math.exp(-x * x) * (1 + abs(x)) ** 2, -np.inf, np.inf)[0]
    assert partition_constant(V, 2.0) == pytest.approx(direct, rel=1e-8)
