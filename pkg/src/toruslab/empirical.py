"""Empirical occupation measures extracted from trajectories.

The grid average a_i = (dt/T) sum_{j=1..n} phi_i(X_{t_j}) (left endpoint
t_0 excluded, so concatenating trajectories averages coefficients exactly
by length) estimates the occupation-measure coefficient of eigenfunction
phi_i.  From the coefficients we form

* psi_i(T) = sqrt(T) a_i, the centered additive functional whose second
  moment has a closed form in the symmetric case (see theory module);
* the mollified occupation density
      f_{T,eps}(y) = 1 + sum_i exp(-lambda_i eps) a_i phi_i(y),
  the kernel-smoothed density of the occupation measure relative to mu;
* binned measures on uniform grids for the exact transport solvers.

For high-dimensional, long-horizon runs the coefficients of every mode in
a frequency box are obtained at once by histogramming the path onto a fine
grid and taking an FFT; nearest-cell binning attenuates mode k by
prod_j sinc(pi k_j / G), which is divided out.  The FFT route equals the
direct evaluation of the binned (cell-snapped) path exactly, and its
residual binning bias is validated against the direct extractor in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simulate import Trajectory
from .spectral import FOUR_PI_SQ, SpectralModel, eigenfunction_matrix, nonzero_mode_heat_sum

#: default cap on grid cells handed to exact transport solvers
GRID_CELL_CAP = 4096

_COEFF_CHUNK = 1 << 16


@dataclass(frozen=True)
class EmpiricalSpectrum:
    """Truncated vector of empirical eigenfunction averages a_i."""

    coeffs: np.ndarray       # (N,)
    eigenvalues: np.ndarray  # (N,) matching the model's ordering
    horizon: float
    dim: int
    model_signature: tuple

    @property
    def truncation(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weights on the uniform grid of grid_n^dim half-open cells."""

    dim: int
    grid_n: int
    weights: np.ndarray  # (grid_n**dim,), sums to 1

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")

    @property
    def n_cells(self) -> int:
        return self.grid_n ** self.dim

    def atoms(self) -> np.ndarray:
        """Cell-center atom locations, shape (n_cells, dim)."""
        idx = np.arange(self.n_cells)
        coords = np.empty((self.n_cells, self.dim))
        for j in range(self.dim - 1, -1, -1):
            coords[:, j] = (idx % self.grid_n + 0.5) / self.grid_n
            idx = idx // self.grid_n
        return coords


def uniform_measure(dim: int, grid_n: int) -> DiscreteMeasure:
    n = grid_n ** dim
    return DiscreteMeasure(dim=dim, grid_n=grid_n, weights=np.full(n, 1.0 / n))


def spectral_coefficients(traj: Trajectory, model: SpectralModel,
                          n_modes: int | None = None) -> EmpiricalSpectrum:
    """Empirical coefficients a_i over the first n_modes eigenfunctions."""
    if traj.dim != model.dim:
        raise ValueError(f"trajectory dim {traj.dim} != model dim {model.dim}")
    n_modes = model.truncation if n_modes is None else n_modes
    if n_modes > model.truncation:
        raise ValueError("n_modes exceeds the model truncation")
    pts = traj.positions[1:]
    idx = np.arange(1, n_modes + 1)
    acc = np.zeros(n_modes)
    for lo in range(0, len(pts), _COEFF_CHUNK):
        block = pts[lo:lo + _COEFF_CHUNK]
        acc += eigenfunction_matrix(model, block, idx).sum(axis=1)
    coeffs = acc / len(pts)
    return EmpiricalSpectrum(coeffs=coeffs, eigenvalues=model.eigenvalues[:n_modes].copy(),
                             horizon=traj.horizon, dim=model.dim,
                             model_signature=model.signature())


def psi_functional(spectrum: EmpiricalSpectrum, i: int) -> float:
    """sqrt(T) * a_i, the normalized additive functional of eigenfunction i."""
    if not 1 <= i <= spectrum.truncation:
        raise IndexError(f"index {i} out of range 1..{spectrum.truncation}")
    return float(np.sqrt(spectrum.horizon) * spectrum.coeffs[i - 1])


def mollified_density(spectrum: EmpiricalSpectrum, model: SpectralModel,
                      eps: float, y) -> float:
    """Kernel-smoothed occupation density f_{T,eps}(y) (may dip below 0).

    Negative values are a truncation artifact surfaced to the caller;
    consumers needing a probability density clip at zero and renormalize.
    Use mollification_tail_bound for the rigorous truncation estimate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    phi = eigenfunction_matrix(model, np.asarray(y, dtype=float),
                               np.arange(1, spectrum.truncation + 1))[:, 0]
    damp = np.exp(-spectrum.eigenvalues * eps)
    return float(1.0 + np.sum(damp * spectrum.coeffs * phi))


def mollification_tail_bound(model: SpectralModel, eps: float,
                             n_modes: int | None = None) -> float:
    """Bound on the discarded part of f_{T,eps}: each tail mode contributes
    at most |a_i| |phi_i(y)| exp(-lambda_i eps) <= 2 exp(-lambda_i eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    n_modes = model.truncation if n_modes is None else n_modes
    retained = float(np.sum(np.exp(-model.eigenvalues[:n_modes] * eps)))
    return 2.0 * max(0.0, nonzero_mode_heat_sum(model.dim, eps) - retained)


def default_truncation(model: SpectralModel, eps: float, cap: int = 200_000) -> int:
    """Smallest N with lambda_N >= 8/eps, capped; keeps exp(-2 lambda_N eps) <= e^-16."""
    n = int(np.searchsorted(model.eigenvalues, 8.0 / eps, side="left")) + 1
    return min(max(n, 1), model.truncation, cap)


def _cell_indices(positions: np.ndarray, grid_n: int) -> np.ndarray:
    idx = np.floor(positions * grid_n).astype(np.int64)
    # guard the x*G == G float edge
    np.clip(idx, 0, grid_n - 1, out=idx)
    flat = idx[:, 0]
    for j in range(1, positions.shape[1]):
        flat = flat * grid_n + idx[:, j]
    return flat


def bin_measure(traj: Trajectory, grid_n: int, cap: int = GRID_CELL_CAP) -> DiscreteMeasure:
    """Fraction of grid time points (t_0 excluded) in each half-open cell."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    n_cells = grid_n ** traj.dim
    if n_cells > cap:
        raise ValueError(f"{n_cells} cells exceed the cap {cap}")
    pts = traj.positions[1:]
    counts = np.bincount(_cell_indices(pts, grid_n), minlength=n_cells).astype(float)
    return DiscreteMeasure(dim=traj.dim, grid_n=grid_n, weights=counts / len(pts))


# -- FFT extraction of all modes in a frequency box --------------------------

@dataclass(frozen=True)
class ModePower:
    """|A(k)|^2 = |mean_j exp(-2 pi i k.x_j)|^2 for all 0 < |k|_inf <= k_max.

    Stored over the real-FFT half grid; mult carries the +-k double count,
    so sums over the full lattice are sum(mult * f(lam) * amp2).  For one
    canonical pair, a_cos^2 + a_sin^2 = 2 |A(k)|^2.
    """

    lam: np.ndarray    # eigenvalues 4 pi^2 |k|^2
    amp2: np.ndarray   # |A(k)|^2, binning-deconvolved
    mult: np.ndarray   # 1 or 2
    dim: int
    grid_n: int
    k_max: int
    n_points: int

    def lattice_sum(self, weight_fn) -> float:
        """sum over k != 0 of weight_fn(lambda_k) |A(k)|^2."""
        return float(np.sum(self.mult * weight_fn(self.lam) * self.amp2))


class _HistogramAccumulator:
    """Streaming position histogram on the uniform grid G^dim."""

    def __init__(self, dim: int, grid_n: int):
        self.dim, self.grid_n = dim, grid_n
        self.counts = np.zeros(grid_n ** dim, dtype=np.float64)
        self.n_points = 0

    def add(self, positions: np.ndarray) -> None:
        flat = _cell_indices(positions, self.grid_n)
        self.counts += np.bincount(flat, minlength=len(self.counts))
        self.n_points += len(positions)


def mode_power_from_histogram(counts: np.ndarray, n_points: int, dim: int,
                              grid_n: int, k_max: int) -> ModePower:
    if k_max >= grid_n // 2:
        raise ValueError("k_max must be below the grid Nyquist frequency")
    hist = counts.reshape((grid_n,) * dim)
    spec = np.fft.rfftn(hist)
    # frequency box |k_j| <= k_max: contiguous take on the rfft layout
    sel_full = np.r_[0:k_max + 1, grid_n - k_max:grid_n]
    sel_last = np.arange(0, k_max + 1)
    block = spec[np.ix_(*([sel_full] * (dim - 1) + [sel_last]))]
    k_full = np.r_[0:k_max + 1, -k_max:0]
    axes_k = [k_full] * (dim - 1) + [sel_last]
    ksq = np.zeros(block.shape)
    window = np.ones(block.shape)
    for ax, kvec in enumerate(axes_k):
        shape = [1] * dim
        shape[ax] = len(kvec)
        ksq = ksq + (kvec.astype(float) ** 2).reshape(shape)
        window = window * np.sinc(kvec / grid_n).reshape(shape)
    mask = ksq > 0
    amp2 = np.abs(block[mask] / (n_points * window[mask])) ** 2
    lam = FOUR_PI_SQ * ksq[mask]
    k_last = np.broadcast_to(sel_last, block.shape)[mask]
    mult = np.where((k_last > 0) & (k_last < grid_n // 2), 2, 1)
    return ModePower(lam=lam, amp2=amp2, mult=mult, dim=dim, grid_n=grid_n,
                     k_max=k_max, n_points=n_points)


def mode_power(positions: np.ndarray, grid_n: int, k_max: int) -> ModePower:
    """FFT-based mode amplitudes of the empirical measure of the given points."""
    acc = _HistogramAccumulator(positions.shape[1], grid_n)
    acc.add(positions)
    return mode_power_from_histogram(acc.counts, acc.n_points, acc.dim, grid_n, k_max)


def spectrum_to_csv(spectrum: EmpiricalSpectrum, path: str) -> None:
    """Dump (i, lambda_i, a_i) rows; full round-trip float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,lambda_i,a_i\n")
        for i, (lam, a) in enumerate(zip(spectrum.eigenvalues, spectrum.coeffs), start=1):
            fh.write(f"{i},{float(lam)!r},{float(a)!r}\n")
