import numpy as np
import pytest

from toruslab.spectral import build_torus_spectrum


@pytest.fixture(scope="session")
def model_d1():
    return build_torus_spectrum(1, 40)


@pytest.fixture(scope="session")
def model_d2():
    return build_torus_spectrum(2, 300)


@pytest.fixture(scope="session")
def model_d3():
    return build_torus_spectrum(3, 2600)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def batched_mode_average(alpha, t_horizon, step, n_replicas, rng, k=1, drift=0.0,
                         batch=256):
    """a_1 = (dt/T) sum_j sqrt(2) cos(2 pi k X_j) for many d=1 replicas at once.

    Vectorized across replicas (time axis 0); used by moment/tail tests
    where the per-replica stream keying of the harness is not needed.
    """
    n = max(1, int(round(t_horizon / step)))
    out = np.empty(n_replicas)
    done = 0
    while done < n_replicas:
        b = min(batch, n_replicas - done)
        if alpha == 1.0:
            ds = np.full((n, b), step)
        else:
            u = (rng.random((n, b)) * (1 - 2e-16) + 1e-16) * np.pi
            e = np.maximum(rng.standard_exponential((n, b)), 1e-290)
            s1 = (np.sin(alpha * u) / np.sin(u) ** (1 / alpha)) \
                * (np.sin((1 - alpha) * u) / e) ** ((1 - alpha) / alpha)
            ds = step ** (1 / alpha) * s1
        inc = np.sqrt(2.0 * ds) * rng.standard_normal((n, b)) + drift * step
        x = np.mod(rng.random(b) + np.cumsum(inc, axis=0), 1.0)
        out[done:done + b] = np.sqrt(2.0) * np.cos(2 * np.pi * k * x).mean(axis=0)
        done += b
    return out


def chi2_two_sample_pvalue(counts_a, counts_b):
    from scipy.stats import chi2
    counts_a = np.asarray(counts_a, dtype=float)
    counts_b = np.asarray(counts_b, dtype=float)
    na, nb = counts_a.sum(), counts_b.sum()
    pooled = (counts_a + counts_b) / (na + nb)
    keep = pooled > 0
    ea, eb = na * pooled[keep], nb * pooled[keep]
    stat = np.sum((counts_a[keep] - ea) ** 2 / ea) + np.sum((counts_b[keep] - eb) ** 2 / eb)
    return float(chi2.sf(stat, keep.sum() - 1))


def chi2_gof_pvalue(counts, masses):
    from scipy.stats import chi2
    counts = np.asarray(counts, dtype=float)
    expected = counts.sum() * np.asarray(masses, dtype=float)
    keep = expected > 0
    stat = np.sum((counts[keep] - expected[keep]) ** 2 / expected[keep])
    return float(chi2.sf(stat, keep.sum() - 1))
