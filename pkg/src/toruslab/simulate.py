"""Subordinated diffusion paths on the flat torus.

The process is a diffusion with generator Delta, time-changed by an
independent increasing stable process of index alpha in (0,1] and, in the
asymmetric case, translated by a constant divergence-free drift Z.  On the
torus the fractional generator and the drift are simultaneous Fourier
multipliers, so the semigroup factorizes exactly into subordinated heat
flow composed with translation by Z t.  The grid recursion

    X_{j+1} = (X_j + sqrt(2 dS_j) xi_j + Z dt) mod 1

therefore has the exact transition law of the generator at every grid
time: there is no time-discretization bias in the marginals.

Increments of the stable time change are drawn by the exact
one-uniform-one-exponential construction: with U uniform on (0, pi) and E
standard exponential,

    S1 = [sin(alpha U) / sin(U)^(1/alpha)] * [sin((1-alpha) U) / E]^((1-alpha)/alpha)

has Laplace transform E[exp(-u S1)] = exp(-u^alpha), and the increment
over dt is dt^(1/alpha) * S1.  alpha = 1 degenerates to the deterministic
clock S_t = t (pure diffusion).

Randomness comes from counter-based Philox streams keyed by (experiment
seed, replica index), so replicas are reproducible and order-independent
regardless of scheduling.  Draw order within a replica is fixed: initial
position first, then per chunk of _CHUNK_STEPS steps the uniforms, the
exponentials, and the Gaussians, in that order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

#: fixed simulation chunk; the draw order (hence the path for a given
#: stream) must not depend on caller-side batching.
_CHUNK_STEPS = 1 << 20

_MASK64 = (1 << 64) - 1


def philox_stream(seed: int, replica: int) -> np.random.Generator:
    """Counter-based stream for one replica of one experiment."""
    key = np.array([seed & _MASK64, replica & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_stable_increment(alpha: float, dt: float, rng: np.random.Generator,
                            size: int | None = None) -> float | np.ndarray:
    """Increment of the index-alpha stable time change over a step dt.

    Exact for every alpha in (0,1); alpha = 1 is the deterministic clock
    and is handled by the caller, not here.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("sample_stable_increment requires 0 < alpha < 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = 1 if size is None else size
    u = (rng.random(n) * (1.0 - 2e-16) + 1e-16) * np.pi
    e = np.maximum(rng.standard_exponential(n), 1e-290)
    s1 = (np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)) \
        * (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    out = dt ** (1.0 / alpha) * s1
    return float(out[0]) if size is None else out


@dataclass(frozen=True)
class ProcessParams:
    """Parameters of one subordinated path on [0,1)^d.

    start is either a point (tuple of coordinates in [0,1)) or the string
    "stationary" for a uniform initial draw.  The step count is
    round(horizon/step) and the horizon is redefined as stepcount*step.
    """

    alpha: float
    drift: tuple[float, ...]
    horizon: float
    step: float
    start: tuple[float, ...] | str = "stationary"

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.horizon <= 0 or self.step <= 0 or self.step > self.horizon * (1 + 1e-12):
            raise ValueError("need 0 < step <= horizon")
        if not np.all(np.isfinite(self.drift)):
            raise ValueError("drift must be finite")
        if isinstance(self.start, str) and self.start != "stationary":
            raise ValueError("start must be a point or 'stationary'")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon / self.step)))

    @property
    def horizon_effective(self) -> float:
        return self.n_steps * self.step


@dataclass(frozen=True)
class Trajectory:
    """Wrapped sample path at grid times j*step, j = 0..n_steps."""

    params: ProcessParams
    positions: np.ndarray  # (n_steps+1, dim) in [0,1)
    seed: int

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def horizon(self) -> float:
        return self.params.horizon_effective


def initial_position(dim: int, params: ProcessParams, rng: np.random.Generator) -> np.ndarray:
    if params.start == "stationary":
        return rng.random(dim)
    x0 = np.asarray(params.start, dtype=float)
    if x0.shape != (dim,) or np.any(x0 < 0) or np.any(x0 >= 1):
        raise ValueError("start point must have all coordinates in [0,1)")
    return x0.copy()


def _raw_increments(dim: int, alpha: float, dt: float, drift: np.ndarray,
                    n: int, rng: np.random.Generator) -> np.ndarray:
    """Unwrapped displacements over n consecutive steps, shape (n, dim)."""
    if alpha == 1.0:
        ds = np.full(n, dt)
    else:
        ds = sample_stable_increment(alpha, dt, rng, size=n)
    xi = rng.standard_normal((n, dim))
    return np.sqrt(2.0 * ds)[:, None] * xi + drift * dt


def iter_position_chunks(dim: int, params: ProcessParams, rng: np.random.Generator):
    """Yield (x0, None), then wrapped position blocks for steps 1..n_steps."""
    drift = np.asarray(params.drift, dtype=float)
    if drift.shape != (dim,):
        raise ValueError(f"drift has dimension {drift.shape}, expected ({dim},)")
    x0 = initial_position(dim, params, rng)
    yield x0, True
    carry = x0.copy()
    remaining = params.n_steps
    while remaining > 0:
        block = min(remaining, _CHUNK_STEPS)
        inc = _raw_increments(dim, params.alpha, params.step, drift, block, rng)
        pos = np.mod(carry + np.cumsum(inc, axis=0), 1.0)
        carry = pos[-1].copy()
        remaining -= block
        yield pos, False


def simulate_path(model_or_dim, params: ProcessParams, rng: np.random.Generator,
                  seed: int = 0) -> Trajectory:
    """Simulate one path; accepts a SpectralModel (for its dimension) or an int."""
    dim = model_or_dim if isinstance(model_or_dim, int) else model_or_dim.dim
    n = params.n_steps
    positions = np.empty((n + 1, dim))
    row = 0
    for block, is_start in iter_position_chunks(dim, params, rng):
        if is_start:
            positions[0] = block
            row = 1
        else:
            positions[row:row + len(block)] = block
            row += len(block)
    return Trajectory(params=params, positions=positions, seed=seed)


# -- optional binary dump (debugging aid) -----------------------------------
# little-endian header: d u32 | stepcount u64 | step f64 | alpha f64 |
# Z d*f64 | seed u64, then (stepcount+1) points as d*f64.

def save_trajectory(traj: Trajectory, path: str) -> None:
    dim = traj.dim
    n = traj.params.n_steps
    header = struct.pack("<IQdd", dim, n, traj.params.step, traj.params.alpha)
    header += struct.pack(f"<{dim}d", *traj.params.drift)
    header += struct.pack("<Q", traj.seed & _MASK64)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(traj.positions, dtype="<f8").tobytes())


def load_trajectory(path: str) -> Trajectory:
    with open(path, "rb") as fh:
        dim, n = struct.unpack("<IQ", fh.read(12))
        step, alpha = struct.unpack("<dd", fh.read(16))
        drift = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        (seed,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * dim * (n + 1)), dtype="<f8")
    positions = data.reshape(n + 1, dim).copy()
    params = ProcessParams(alpha=alpha, drift=drift, horizon=n * step, step=step,
                           start=tuple(positions[0]))
    return Trajectory(params=params, positions=positions, seed=int(seed))
