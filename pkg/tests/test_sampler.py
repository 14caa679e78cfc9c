import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import dblquad

from mfgas.kernels import InteractionKernel, Potential
from mfgas.sampler import (
    GasParameters, ParticleConfiguration, SamplerConfigError, acceptance_probability,
    delta_energy, density_of_states_histogram, empirical_field, estimate_partition_ratio,
    init_chain, integrated_autocorr_time, mh_step, run_chain, run_replicas, sample_iid,
    sample_tridiagonal_gbe, total_energy,
)
from mfgas.sampler import _advance

LOG1 = InteractionKernel("log", 1)
X2 = Potential.power(2.0, 1)


def gas(N, gamma=1.0, kernel=LOG1, pot=X2, **kw):
    return GasParameters(N, gamma, kernel, pot, **kw)


def batch_stderr(x, batches=50):
    b = np.array_split(np.asarray(x), batches)
    m = np.array([v.mean() for v in b])
    return m.std(ddof=1) / math.sqrt(batches)


# ---------------------------------------------------------------- energies

def test_single_particle_energy():
    for k in (LOG1, InteractionKernel("riesz", 1, 0.5)):
        assert total_energy(gas(1, kernel=k), [2.0]) == 4.0


def test_single_pair_energy():
    k = InteractionKernel("riesz", 2, 1.0)
    zero = Potential("tabulated", n=2, grid=(0.0, 5.0, 10.0), values=(0.0, 0.0, 0.0))
    p = gas(2, kernel=k, pot=zero, beta_override=1.0)
    assert total_energy(p, [[0.0, 0.0], [2.0, 0.0]]) == pytest.approx(0.5, abs=1e-15)


def test_energy_brute_force(rng):
    p = gas(3, gamma=2.0)
    x = rng.normal(size=3)
    bf = sum(x**2) + p.beta * sum(-math.log(abs(x[i] - x[j])) for i in range(3) for j in range(i + 1, 3))
    assert total_energy(p, x) == pytest.approx(bf, abs=1e-12)


def test_beta_is_gamma_over_N():
    p = gas(7, gamma=3.0)
    assert p.beta * p.N == 3.0 and p.betaN == 3.0
    assert gas(7, 3.0, beta_override=1.0).beta == 1.0
    assert p.with_N(6, keep_beta=True).beta == p.beta


def test_collision_energy_infinite():
    assert total_energy(gas(2), [1.0, 1.0]) == math.inf


def test_delta_identity_and_singular():
    p = gas(4)
    cfg = ParticleConfiguration.from_positions(p, [0.0, 0.5, -1.0, 2.0])
    assert delta_energy(p, cfg, 1, [0.5]) == 0.0
    assert delta_energy(p, cfg, 1, [2.0]) == math.inf
    tab = Potential("tabulated", n=1, grid=(-3.0, 0.0, 3.0), values=(9.0, 9.0, 9.0))
    pt = gas(4, pot=tab)
    cfg = ParticleConfiguration.from_positions(pt, [0.0, 0.5, -1.0, 2.0])
    assert delta_energy(pt, cfg, 0, [5.0]) == math.inf


@pytest.mark.parametrize("kernel,n", [(LOG1, 1), (InteractionKernel("riesz", 1, 0.5), 1),
                                      (InteractionKernel("log", 2), 2),
                                      (InteractionKernel("riesz", 2, 1.0), 2)])
def test_delta_matches_recomputation(rng, kernel, n):
    p = gas(16, 2.0, kernel, Potential.power(2.0, n))
    x = rng.normal(size=(16, n))
    cfg = ParticleConfiguration.from_positions(p, x)
    for _ in range(20):
        j = int(rng.integers(16))
        y = x[j] + rng.normal(size=n)
        x2 = x.copy()
        x2[j] = y
        d = delta_energy(p, cfg, j, y)
        assert d == pytest.approx(total_energy(p, x2) - total_energy(p, x), abs=1e-9)


def test_acceptance_formula():
    # hand-computed energy differences
    assert acceptance_probability(-0.3) == 1.0
    assert acceptance_probability(0.0) == 1.0
    assert acceptance_probability(math.log(4)) == pytest.approx(0.25, rel=1e-15)
    assert acceptance_probability(math.inf) == 0.0
    p = gas(2, gamma=2.0)  # beta = 1
    cfg = ParticleConfiguration.from_positions(p, [0.0, 1.0])
    d = delta_energy(p, cfg, 1, [2.0])
    # (4 - 1) + beta * (-log 2 + log 1)
    assert d == pytest.approx(3.0 - math.log(2.0), abs=1e-14)
    assert acceptance_probability(d) == pytest.approx(2 * math.exp(-3.0), rel=1e-14)


def test_incremental_consistency_after_many_moves():
    for kernel, n in [(LOG1, 1), (InteractionKernel("riesz", 2, 1.0), 2)]:
        p = gas(16, 2.0, kernel, Potential.power(2.0, n))
        st = init_chain(p, seed=3, proposal_scale=0.3)
        while st.accept_count < 10_000:
            _advance(st, p, 5000)
        assert abs(st.energy - total_energy(p, st.positions)) < 1e-6


def test_mh_step_counts():
    p = gas(5)
    st = init_chain(p, seed=1)
    for _ in range(10):
        mh_step(st, p)
    assert st.step_count == 10 and 0 <= st.accept_count <= 10


# ---------------------------------------------------------------- chains

def test_single_particle_variance():
    run = run_chain(gas(1), 1_000_000, burn_in=10_000, thin=50, seed=11)
    x = run.positions()[:, 0, 0]
    se = batch_stderr(x**2)
    assert abs(np.mean(x**2) - 0.5) < 3 * se
    assert 0.1 < run.acceptance_rate < 0.6


def test_two_particle_log_gas_against_quadrature():
    beta = 0.5  # gamma = 1, N = 2
    w = lambda y, x: abs(x - y) ** beta * math.exp(-x * x - y * y)
    Z = dblquad(w, -8, 8, -8, 8, epsabs=1e-11)[0]
    m2 = dblquad(lambda y, x: (x * x + y * y) * w(y, x), -8, 8, -8, 8, epsabs=1e-11)[0] / Z
    run = run_chain(gas(2), 400_000, burn_in=1000, thin=20, seed=5)
    s = (run.positions()[:, :, 0] ** 2).sum(axis=1)
    assert abs(s.mean() - m2) < 3 * batch_stderr(s)


def test_chain_determinism():
    p = gas(32, 2.0)
    a = run_chain(p, 32 * 40, seed=99).positions()
    b = run_chain(p, 32 * 40, seed=99).positions()
    assert a.tobytes() == b.tobytes()
    c = run_chain(p, 32 * 40, seed=100).positions()
    assert a.tobytes() != c.tobytes()


def test_chain_diagnostics():
    run = run_chain(gas(64, 1.0), 64 * 60, seed=2)
    assert len(run) == 50
    assert 0.1 <= run.acceptance_rate <= 0.6 and not run.warnings
    assert run.max_energy_drift < 1e-9
    assert run.autocorr_time >= 1


def test_replicas_use_distinct_seeds():
    runs = run_replicas(gas(8), 3, 8 * 20, seed=4)
    pos = [r.positions().tobytes() for r in runs]
    assert len(set(pos)) == 3
    again = run_replicas(gas(8), 3, 8 * 20, seed=4, threads=3)
    assert [r.positions().tobytes() for r in again] == pos


def test_steps_must_exceed_burn_in():
    with pytest.raises(ValueError):
        run_chain(gas(4), 40, burn_in=40)


def test_autocorr_of_white_noise(rng):
    assert integrated_autocorr_time(rng.normal(size=20000)) < 1.2
    ar = np.zeros(20000)
    e = rng.normal(size=20000)
    for i in range(1, 20000):
        ar[i] = 0.9 * ar[i - 1] + e[i]
    assert integrated_autocorr_time(ar) == pytest.approx(19.0, rel=0.25)


# ---------------------------------------------------------------- exact samplers

def test_iid_gaussian_moments():
    x = sample_iid(X2, 100_000, seed=1).flat()
    se = math.sqrt(0.5 / x.size)
    assert abs(x.mean()) < 3 * se
    assert abs(x.var() - 0.5) < 3 * 0.5 * math.sqrt(2 / x.size)


def test_iid_laplace_radial_law():
    x = sample_iid(Potential.power(1.0, 1), 20_000, seed=2).flat()
    assert stats.kstest(np.abs(x), "expon").statistic < 1.36 / math.sqrt(x.size)


def test_iid_power_2d_radial_law():
    pts = sample_iid(Potential.power(3.0, 2), 20_000, seed=3).positions
    r3 = np.linalg.norm(pts, axis=1) ** 3
    assert stats.kstest(r3, stats.gamma(2 / 3).cdf).statistic < 1.36 / math.sqrt(r3.size)


def test_iid_tabulated_matches_power():
    g = np.linspace(-6, 6, 2001)
    tab = Potential("tabulated", n=1, grid=tuple(g), values=tuple(np.abs(g)))
    x = sample_iid(tab, 20_000, seed=4).flat()
    assert stats.kstest(np.abs(x), "expon").statistic < 1.36 / math.sqrt(x.size)


def test_iid_empty():
    c = sample_iid(X2, 0, seed=0)
    assert c.N == 0 and c.cached_energy == 0.0


def test_iid_rejection_efficiency_error():
    # radial table concentrated far out with a tiny inner bump: efficiency far below 1e-4
    tab = Potential("tabulated", n=2, grid=(0.0, 1e-6, 1e-5, 1e6), values=(0.0, 0.0, 60.0, 60.0))
    with pytest.raises(SamplerConfigError):
        sample_iid(tab, 100, seed=0)


def test_tridiagonal_single():
    x = np.array([sample_tridiagonal_gbe(1, 1.0, seed=i)[0] for i in range(20000)])
    assert abs(x.var() - 0.5) < 3 * 0.5 * math.sqrt(2 / x.size)


def test_tridiagonal_pair_second_moment():
    w = lambda y, x: abs(x - y) * math.exp(-x * x - y * y)
    Z = dblquad(w, -8, 8, -8, 8)[0]
    m2 = dblquad(lambda y, x: (x * x + y * y) * w(y, x), -8, 8, -8, 8)[0] / Z
    assert m2 == pytest.approx(1.5, abs=1e-7)
    ss = np.random.SeedSequence(8).spawn(20000)
    s = np.array([np.sum(sample_tridiagonal_gbe(2, 1.0, seed=q) ** 2) for q in ss])
    assert abs(s.mean() - 1.5) < 3 * s.std(ddof=1) / math.sqrt(s.size)


def test_tridiagonal_modes_agree():
    full = sample_tridiagonal_gbe(500, 0.01, seed=6)
    assert np.all(np.diff(full) >= 0)
    np.testing.assert_allclose(sample_tridiagonal_gbe(500, 0.01, seed=6, top=3), full[-3:], rtol=1e-10)
    sel = sample_tridiagonal_gbe(500, 0.01, seed=6, interval=(-0.5, 0.5))
    np.testing.assert_allclose(sel, full[(full > -0.5) & (full <= 0.5)], rtol=1e-9, atol=1e-12)


def test_tridiagonal_needs_positive_beta():
    with pytest.raises(ValueError):
        sample_tridiagonal_gbe(3, 0.0)


# ---------------------------------------------------------------- derived quantities

def test_empirical_field_examples():
    r = gas(2, kernel=InteractionKernel("riesz", 1, 1.0 - 1e-12))
    assert empirical_field(r, [1.0, 3.0], 0.0) == pytest.approx(2 / 3, rel=1e-10)
    assert empirical_field(gas(1), [math.e], 0.0) == pytest.approx(-1.0, abs=1e-15)
    assert empirical_field(gas(1), [1.0], 1.0) == math.inf


def test_empirical_field_approaches_equilibrium(log_solution):
    u = 0.3
    target = float(np.interp(u, log_solution.density.nodes, log_solution.U))
    errs = []
    for N in (32, 128):
        ss = np.random.SeedSequence(N).spawn(100)
        vals = [abs(empirical_field(gas(N), sample_tridiagonal_gbe(N, 1.0 / N, seed=q), u) - target)
                for q in ss]
        errs.append(np.mean(vals))
    assert errs[1] < errs[0]


def test_partition_ratio_zero_coupling():
    est = estimate_partition_ratio(gas(10, 0.0), 30, seed=1)
    assert est.estimate == pytest.approx(math.sqrt(math.pi), abs=1e-15)


def test_partition_ratio_two_particles():
    gamma = 0.5
    beta = gamma / 2
    Z2 = dblquad(lambda y, x: abs(x - y) ** beta * math.exp(-x * x - y * y), -8, 8, -8, 8)[0]
    exact = Z2 / math.sqrt(math.pi)
    assert exact == pytest.approx(2 ** (beta / 2) * math.gamma((beta + 1) / 2), rel=1e-7)
    est, se = estimate_partition_ratio(gas(2, gamma), 60, seed=2, frames=8, u_per_frame=64)
    assert abs(est - exact) < 3 * se


def test_dos_zero_coupling():
    p = gas(1000, 0.0)
    cfgs = [sample_iid(X2, 1000, seed=q) for q in np.random.SeedSequence(3).spawn(1000)]
    h = density_of_states_histogram(p, cfgs, np.linspace(-4, 4, 81))
    exact = np.diff(stats.norm(scale=math.sqrt(0.5)).cdf(h.edges)) / np.diff(h.edges)
    assert np.sum(np.abs(h.values - exact) * np.diff(h.edges)) < 0.02
    assert h.counts.sum() <= h.total == 1_000_000
