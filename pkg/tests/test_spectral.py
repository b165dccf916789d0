import numpy as np
import pytest
from numpy.polynomial.legendre import leggauss

from toruslab.spectral import (COSINE, SINE, FOUR_PI_SQ, SpectralModel, TruncationError,
                               brownian_increment, build_torus_spectrum,
                               eigenfunction_eval, eigenfunction_matrix,
                               eigenvalue_count_below, heat_kernel,
                               heat_kernel_sample, heat_kernel_truncation_bound,
                               lattice_level_counts, nonzero_mode_heat_sum,
                               theta_sum_1d, weyl_window, wrapped_gauss_bin_masses)

from conftest import chi2_gof_pvalue


def brute_force_eigenvalues(dim, n_modes):
    """Independent enumeration oracle: sorted nonzero eigenvalues with pairs."""
    k_max = 1
    while True:
        axes = [np.arange(-k_max, k_max + 1)] * dim
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)
        nsq = (grid ** 2).sum(1)
        nsq = nsq[(nsq > 0) & (nsq <= k_max ** 2)]
        if 2 * len(nsq) // 2 >= n_modes and len(nsq) >= n_modes:
            lam = np.sort(FOUR_PI_SQ * nsq.astype(float))
            return lam[:n_modes]
        k_max += 2


def test_build_d1_smallest_pair():
    m = build_torus_spectrum(1, 2)
    assert np.allclose(m.eigenvalues, FOUR_PI_SQ)
    assert m.modes.ravel().tolist() == [1, 1]
    assert m.parity.tolist() == [COSINE, SINE]


def test_build_d2_square_symmetry():
    m = build_torus_spectrum(2, 4)
    assert np.allclose(m.eigenvalues, FOUR_PI_SQ)
    mode_set = {tuple(k) for k in m.modes}
    assert mode_set == {(1, 0), (0, 1)}


def test_build_d3_counts_match_bruteforce():
    m = build_torus_spectrum(3, 10_000)
    lam_n = m.eigenvalues[-1]
    for lam in np.linspace(0.3 * lam_n, 0.98 * lam_n, 10):
        model_count = int(np.sum(m.eigenvalues <= lam))
        # direct enumeration of {k in Z^3 : 4 pi^2 |k|^2 <= lam}
        k_max = int(np.floor(np.sqrt(lam / FOUR_PI_SQ)))
        axes = [np.arange(-k_max, k_max + 1)] * 3
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
        nsq = (grid ** 2).sum(1)
        brute = int(np.sum((nsq > 0) & (FOUR_PI_SQ * nsq <= lam)))
        assert model_count == brute
        assert eigenvalue_count_below(3, lam) == brute


def test_build_rejections():
    with pytest.raises(ValueError):
        build_torus_spectrum(5, 10)
    with pytest.raises(ValueError):
        build_torus_spectrum(2, 0)
    with pytest.raises(ValueError):
        build_torus_spectrum(1, 10 ** 9)


def test_eigen_ordering_deterministic(model_d2):
    nsq = (model_d2.modes ** 2).sum(1)
    assert np.all(np.diff(nsq) >= 0)
    m2 = build_torus_spectrum(2, model_d2.truncation)
    assert np.array_equal(m2.modes, model_d2.modes)
    assert np.array_equal(m2.parity, model_d2.parity)


def test_eigenfunction_values(model_d1):
    assert eigenfunction_eval(model_d1, 1, [0.0]) == pytest.approx(np.sqrt(2.0))
    assert eigenfunction_eval(model_d1, 2, [0.0]) == pytest.approx(0.0)
    with pytest.raises(IndexError):
        eigenfunction_eval(model_d1, 0, [0.0])
    with pytest.raises(IndexError):
        eigenfunction_eval(model_d1, model_d1.truncation + 1, [0.0])


@pytest.mark.parametrize("dim", [1, 2])
def test_orthonormality_by_gauss_quadrature(dim, rng):
    model = build_torus_spectrum(dim, 30 if dim == 1 else 60)
    nodes, weights = leggauss(96)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    if dim == 1:
        pts = nodes[:, None]
        w = weights
    else:
        xx, yy = np.meshgrid(nodes, nodes, indexing="ij")
        pts = np.stack([xx.ravel(), yy.ravel()], 1)
        w = np.outer(weights, weights).ravel()
    for _ in range(20):
        i, j = rng.integers(1, model.truncation + 1, size=2)
        phi = eigenfunction_matrix(model, pts, np.array([i, j]))
        val = float(np.sum(w * phi[0] * phi[1]))
        assert abs(val - (1.0 if i == j else 0.0)) < 1e-10


def test_weyl_sandwich_against_bruteforce_oracle():
    for dim, n in [(1, 40), (2, 300), (3, 2600)]:
        model = build_torus_spectrum(dim, n)
        lam_oracle = brute_force_eigenvalues(dim, n)
        assert np.allclose(model.eigenvalues, lam_oracle, rtol=0, atol=1e-9)
        lo, hi = weyl_window(model)
        i = np.arange(1, n + 1)
        ratio = lam_oracle / i ** (2.0 / dim)
        assert lo >= ratio.min() - 1e-9 and hi <= ratio.max() + 1e-9


def test_heat_kernel_equilibrium(model_d1):
    assert heat_kernel(model_d1, 5.0, [0.3], [0.77]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
def test_heat_kernel_conservation(model_d1, t):
    y = (np.arange(2048)[:, None] + 0.5) / 2048
    for method in ("image", "spectral"):
        vals = heat_kernel(model_d1, t, np.array([[0.371]]), y, method=method)
        assert np.mean(vals) == pytest.approx(1.0, abs=1e-9)


def test_heat_kernel_duality(model_d1, model_d2, model_d3, rng):
    models = {1: model_d1, 2: model_d2, 3: model_d3}
    for _ in range(30):
        d = int(rng.integers(1, 4))
        t = float(rng.uniform(0.01, 1.0))
        x, y = rng.random(d), rng.random(d)
        ps = heat_kernel(models[d], t, x, y, method="spectral")
        pi = heat_kernel(models[d], t, x, y, method="image")
        assert abs(ps - pi) < 1e-8


def test_heat_kernel_guards(model_d1):
    with pytest.raises(ValueError):
        heat_kernel(model_d1, -1.0, [0.1], [0.2])
    tiny = build_torus_spectrum(1, 2)
    with pytest.raises(TruncationError):
        heat_kernel(tiny, 0.01, [0.1], [0.2], method="spectral")
    assert heat_kernel_truncation_bound(tiny, 0.01) > 1e-6


def test_semigroup_property(model_d1):
    z = (np.arange(2048)[:, None] + 0.5) / 2048
    x = np.array([[0.2]])
    y = np.array([[0.63]])
    for s, t in [(0.05, 0.05), (0.1, 0.2)]:
        ps = heat_kernel(model_d1, s, x, z)
        pt = heat_kernel(model_d1, t, z, y)
        conv = float(np.mean(ps * pt))
        assert conv == pytest.approx(heat_kernel(model_d1, s + t, x, y), abs=1e-6)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_ultracontractive_decay(dim):
    # sup_z |p_t(z) - 1| <= C (1 and t)^{-d/2} e^{-lambda_1 t}.  The normalized
    # ratio grows from (4 pi)^{-d/2} at small t to 2d (the first-shell
    # multiplicity) as t -> infinity, so a constant fitted at t = 0.05 alone
    # cannot cover later times; the envelope constant is the max of the
    # small-t fit and the exact large-t limit 2d.
    n = 32
    axes = [(np.arange(n) + 0.5) / n] * dim
    z = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, dim)
    model = build_torus_spectrum(dim, 8)
    lam1 = model.lambda1

    def sup_dev(t):
        vals = heat_kernel(model, t, z, np.zeros((1, dim)), method="image")
        return float(np.abs(vals - 1.0).max())

    def envelope(t, c):
        return c * min(1.0, t) ** (-dim / 2.0) * np.exp(-lam1 * t)

    t0 = 0.05
    c_fit = sup_dev(t0) / (t0 ** (-dim / 2.0) * np.exp(-lam1 * t0))
    c = 1.05 * max(c_fit, 2.0 * dim)
    for t in (0.1, 0.2, 0.5, 1.0, 2.0):
        assert sup_dev(t) <= envelope(t, c)
    # the small-t fit alone covers the diffusive regime t <= t0
    for t in (0.01, 0.02, 0.05):
        assert sup_dev(t) <= envelope(t, 1.05 * c_fit)


def test_level_counts_known_values():
    r3 = lattice_level_counts(3, 12)
    assert r3[:10].tolist() == [1, 6, 12, 8, 6, 24, 24, 0, 12, 30]
    r1 = lattice_level_counts(1, 9)
    assert r1[:10].tolist() == [1, 2, 0, 0, 2, 0, 0, 0, 0, 2]


def test_theta_sum_consistency(model_d3):
    # explicit eigenpair sum == theta-function mass minus the tail
    t = 0.5
    explicit = float(np.sum(np.exp(-model_d3.eigenvalues * t)))
    full = nonzero_mode_heat_sum(3, t)
    assert 0 <= full - explicit < 1e-12
    # Poisson-summed and direct theta agree across the switch point
    for tt in (0.01, 0.029, 0.031, 0.2):
        direct = sum(np.exp(-FOUR_PI_SQ * tt * m * m) for m in range(-60, 61))
        assert theta_sum_1d(tt) == pytest.approx(float(direct), rel=1e-13)


def test_sampler_degenerate_time(rng):
    x = rng.random((10, 2))
    for row in x:
        out = heat_kernel_sample(2, 1e-12, row, rng)
        assert np.all(np.abs(out - row) < 1e-5)


def test_brownian_increment_variance(rng):
    t = 0.13
    draws = brownian_increment(3, t, rng, size=100_000)
    var = draws.var(axis=0, ddof=1)
    se = 2.0 * t * np.sqrt(2.0 / (len(draws) - 1))
    assert np.all(np.abs(var - 2.0 * t) < 3.0 * se)


def test_wrapped_sampler_chi2(rng):
    x0, t, bins = 0.37, 0.05, 64
    draws = heat_kernel_sample(1, t, np.array([x0]), rng, size=100_000)[:, 0]
    counts = np.bincount(np.minimum((draws * bins).astype(int), bins - 1), minlength=bins)
    masses = wrapped_gauss_bin_masses(x0, t, bins)
    assert chi2_gof_pvalue(counts, masses) > 1e-3


def test_model_immutable(model_d1):
    with pytest.raises(Exception):
        model_d1.dim = 2
