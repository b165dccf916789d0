"""Experiment orchestration: sweeps over the horizon T, rate regression,
the renormalization trend study, the deviation-bound dominance test, and a
deterministic selftest of the closed-form identities.

Reproducibility contract: every replica owns a counter-based stream keyed
by (experiment seed, T-index, replica index); replica results are reduced
in replica order, so identical configs and seeds give byte-identical CSV
output regardless of the worker count.

Distance estimators
-------------------
circular        exact d=1 W1 between the path's occupation atoms and the
                flat measure (closed form, no binning).
discrete_ot     exact W_p between the binned occupation measure and the
                binned flat measure on a shared grid (LP solver).
spectral_proxy  sqrt(2 d eps + 4 * H) with H the truncated negative-Sobolev
                functional of the mollified occupation measure at the
                schedule eps(T).  The two terms mirror the mollification
                coupling cost (~ eps per squared distance) and the
                Benamou-Brenier bound (4 H >= W2^2 of the mollified
                measure); each alone degenerates at desk scale (the bare
                H term is suppressed by exp(-2 lambda_1 eps) until
                lambda_1 eps << 1), while their sum tracks the distance
                scale across the whole sweep.

The renormalization study reports the bare ratio r(T) = T * E[H] / log T,
whose target is Vol/(2 pi^2).  Its mollification uses eps = beta/T with
beta = 1/16: any fixed beta is asymptotically equivalent, and this value
keeps the computable finite-size offset of the unit torus (the constant
gap between the spectral sum and its logarithmic asymptote, checked
deterministically by the selftest) inside the trend window at desk scale.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import beta as beta_dist

from . import theory
from .empirical import (DiscreteMeasure, EmpiricalSpectrum, _HistogramAccumulator,
                        mode_power_from_histogram, uniform_measure)
from .simulate import ProcessParams, iter_position_chunks, philox_stream
from .spectral import FOUR_PI_SQ, build_torus_spectrum, heat_kernel
from .theory import RatePrediction
from .transport import (spectral_h_proxy, w1_circle_exact, w1_circle_uniform,
                        w_lp_reference, wp_discrete, wp_entropic_bracket,
                        w2_upper_bound_functional)

THREADS_ENV = "TORUSLAB_THREADS"

#: mollification schedule constant for the renormalization study (see module doc)
RENORM_BETA = 1.0 / 16.0
#: proxy truncation: retain eigenvalues up to RENORM_TRUNC / eps
RENORM_TRUNC = 2.5
#: FFT grid oversampling relative to the retained frequency box
FFT_OVERSAMPLE = 3.1
#: target spectral resolution of the time grid: lambda_max^alpha * step <= this
STEP_TARGET = 0.3
STEP_CAP = 0.01
#: frequency-box caps per dimension (memory guards for the FFT extractor)
KMAX_CAP = {1: 4096, 2: 512, 3: 160, 4: 24}

GAMMA_FLOOR = 1e-2
GAMMA_SAFETY = 1.5

RENORM_TARGET = 1.0 / (2.0 * np.pi ** 2)

ESTIMATORS = ("circular", "discrete_ot", "spectral_proxy")


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    kind: str                       # rate | renorm | deviation | selftest
    alpha: float = 0.5
    dim: int = 1
    drift: tuple = ()
    t_grid: tuple = ()
    replicas: int = 200
    step: float | str = "auto"
    estimator: str = "circular"
    grid_n: int = 64
    truncation: int | str = "auto"
    eps_policy: float | str = "paper"
    p: float = 1.0
    g_mode: int = 1                 # frequency of the deviation test function
    seed: int = 20260810
    out: str | None = None
    threads: int | None = None
    slope_tol: float = 0.08
    crosscheck_replicas: int = 2

    def __post_init__(self):
        if self.kind not in ("rate", "renorm", "deviation", "selftest"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if not self.drift:
            self.drift = (0.0,) * self.dim
        if len(self.drift) != self.dim:
            raise ValueError("drift dimension must match dim")
        if self.t_grid and list(self.t_grid) != sorted(set(self.t_grid)):
            raise ValueError("t_grid must be strictly increasing")
        if self.kind == "renorm":
            self.estimator = "spectral_proxy"
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.kind == "rate" and self.estimator == "circular" and self.dim != 1:
            raise ValueError("the circular estimator requires dim 1")
        if any(z != 0 for z in self.drift) and not 0.5 < self.alpha <= 1.0:
            raise ValueError("nonzero drift requires alpha in (1/2, 1]")

    def drift_vector(self) -> np.ndarray:
        return np.asarray(self.drift, dtype=float)


def _resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def _run_indexed(n: int, fn, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _eps_for(cfg: ExperimentConfig, t_horizon: float) -> float:
    policy = cfg.eps_policy
    if isinstance(policy, (int, float)):
        return float(policy)
    if policy == "paper":
        if cfg.kind == "renorm":
            return RENORM_BETA / t_horizon
        return theory.epsilon_schedule(cfg.alpha, cfg.dim, t_horizon)
    if isinstance(policy, str) and policy.startswith("logpow:"):
        power = float(policy.split(":", 1)[1])
        return math.log(t_horizon) ** power / t_horizon
    raise ValueError(f"unknown eps policy {policy!r}")


def _step_for(cfg: ExperimentConfig, t_horizon: float, lam_max: float | None) -> float:
    if isinstance(cfg.step, (int, float)):
        return float(cfg.step)
    if lam_max is None:
        return min(STEP_CAP, t_horizon)
    return min(STEP_CAP, STEP_TARGET * lam_max ** (-cfg.alpha), t_horizon)


def _fft_size(min_size: int, multiple: int = 2) -> int:
    """Smallest 5-smooth multiple of `multiple` that is >= min_size."""
    n = max(min_size, multiple)
    n += (-n) % multiple
    while True:
        m = n
        for p in (2, 3, 5):
            while m % p == 0:
                m //= p
        if m == 1:
            return n
        n += multiple


def _proxy_kmax(eps: float, dim: int) -> int:
    k = int(np.ceil(np.sqrt(RENORM_TRUNC / (eps * FOUR_PI_SQ))))
    return max(1, min(k, KMAX_CAP[dim]))


# ---------------------------------------------------------------------------
# per-replica workers

def _iter_blocks(dim: int, params: ProcessParams, stream):
    for block, is_start in iter_position_chunks(dim, params, stream):
        if not is_start:
            yield block


def _replica_w1_circular(params: ProcessParams, stream) -> float:
    buf = np.empty(params.n_steps)
    row = 0
    for block in _iter_blocks(1, params, stream):
        buf[row:row + len(block)] = block[:, 0]
        row += len(block)
    return w1_circle_uniform(buf).value


def _replica_discrete_ot(cfg: ExperimentConfig, params: ProcessParams, stream) -> float:
    acc = _HistogramAccumulator(cfg.dim, cfg.grid_n)
    for block in _iter_blocks(cfg.dim, params, stream):
        acc.add(block)
    emp = DiscreteMeasure(dim=cfg.dim, grid_n=cfg.grid_n, weights=acc.counts / acc.n_points)
    return wp_discrete(emp, uniform_measure(cfg.dim, cfg.grid_n), p=cfg.p).value


class _CircleModeAccumulator:
    """Streaming sums of cos/sin(2 pi k x) for k = 1..k_max (d = 1)."""

    _SUB = 1 << 16

    def __init__(self, k_max: int):
        self.k = np.arange(1, k_max + 1, dtype=float)
        self.cos = np.zeros(k_max)
        self.sin = np.zeros(k_max)
        self.n = 0

    def add(self, pts: np.ndarray) -> None:
        pts = pts.reshape(-1)
        for lo in range(0, len(pts), self._SUB):
            phase = 2.0 * np.pi * np.outer(pts[lo:lo + self._SUB], self.k)
            self.cos += np.cos(phase).sum(axis=0)
            self.sin += np.sin(phase).sum(axis=0)
        self.n += len(pts)

    def h_proxy(self, eps: float) -> float:
        lam = FOUR_PI_SQ * self.k ** 2
        a_sq = 2.0 * ((self.cos / self.n) ** 2 + (self.sin / self.n) ** 2)
        return float(np.sum(np.exp(-2.0 * lam * eps) / lam * a_sq))


def _replica_h_proxy(cfg: ExperimentConfig, params: ProcessParams, stream,
                     eps: float, k_max: int, grid_n: int,
                     coarse_n: int | None = None):
    """Bare negative-Sobolev functional of one replica (plus optional coarse hist)."""
    if cfg.dim == 1:
        acc = _CircleModeAccumulator(k_max)
        for block in _iter_blocks(1, params, stream):
            acc.add(block)
        return acc.h_proxy(eps), None
    acc = _HistogramAccumulator(cfg.dim, grid_n)
    for block in _iter_blocks(cfg.dim, params, stream):
        acc.add(block)
    power = mode_power_from_histogram(acc.counts, acc.n_points, cfg.dim, grid_n, k_max)
    coarse = None
    if coarse_n is not None:
        shape = sum(((coarse_n, grid_n // coarse_n),) * cfg.dim, ())
        coarse = acc.counts.reshape(shape).sum(axis=tuple(range(1, 2 * cfg.dim, 2)))
        coarse = coarse.reshape(-1) / acc.n_points
    return spectral_h_proxy(power, eps), coarse


# ---------------------------------------------------------------------------
# output helpers

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_sidecar(csv_path: str, payload: dict) -> str:
    path = csv_path + ".summary.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _config_echo(cfg: ExperimentConfig) -> dict:
    echo = asdict(cfg)
    echo["drift"] = list(cfg.drift)
    echo["t_grid"] = list(cfg.t_grid)
    return echo


# ---------------------------------------------------------------------------
# log-log regression

def fit_loglog_slope(points) -> tuple[float, float, float]:
    """Weighted least squares of log(value) on log(T).

    points: iterable of (T, value, stderr); weights are 1/(stderr/value)^2
    when all stderr are positive (known-variance fit), otherwise ordinary
    least squares with residual-based errors.  Returns (slope,
    slope_stderr, intercept); slope_stderr is always positive.
    """
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need >= 3 grid points for regression")
    t = np.array([p[0] for p in pts], dtype=float)
    v = np.array([p[1] for p in pts], dtype=float)
    se = np.array([p[2] for p in pts], dtype=float)
    if np.any(v <= 0):
        raise ValueError("log-log regression needs positive values")
    x, y = np.log(t), np.log(v)
    rel = np.divide(se, v, out=np.zeros_like(se), where=v > 0)
    known_var = bool(np.all(rel > 0))
    w = 1.0 / rel ** 2 if known_var else np.ones_like(x)
    design = np.stack([np.ones_like(x), x], axis=1)
    xtw = design.T * w
    cov = np.linalg.inv(xtw @ design)
    coef = cov @ (xtw @ y)
    if not known_var:
        resid = y - design @ coef
        cov = cov * float(resid @ (w * resid)) / max(len(x) - 2, 1)
    slope_se = float(np.sqrt(max(cov[1, 1], 0.0)))
    return float(coef[1]), max(slope_se, 1e-15), float(coef[0])


# ---------------------------------------------------------------------------
# rate experiment

@dataclass
class RateReport:
    estimator: str
    rows: list                       # (T, mean, stderr, n_replicas)
    slope: float
    slope_stderr: float
    intercept: float
    prediction: RatePrediction
    tolerance: float
    passed: bool
    csv_path: str | None = None
    extras: dict = field(default_factory=dict)


def run_rate_experiment(cfg: ExperimentConfig) -> RateReport:
    if cfg.kind != "rate":
        raise ValueError("config kind must be 'rate'")
    if len(cfg.t_grid) < 3:
        raise ValueError("need >= 3 grid points for regression")
    if cfg.replicas < 2:
        raise ValueError("need >= 2 replicas for a variance report")
    threads = _resolve_threads(cfg.threads)
    rows = []
    eps_used = {}
    for ti, t_horizon in enumerate(cfg.t_grid):
        eps = _eps_for(cfg, t_horizon) if cfg.estimator == "spectral_proxy" else None
        if cfg.estimator == "spectral_proxy":
            k_max = _proxy_kmax(eps, cfg.dim)
            lam_max = FOUR_PI_SQ * k_max ** 2
            grid_n = _fft_size(int(np.ceil(FFT_OVERSAMPLE * k_max))) if cfg.dim > 1 else 0
            eps_used[t_horizon] = eps
        else:
            k_max, lam_max, grid_n = 0, None, cfg.grid_n
        step = _step_for(cfg, t_horizon, lam_max)
        params = ProcessParams(alpha=cfg.alpha, drift=cfg.drift, horizon=t_horizon,
                               step=step, start="stationary")

        def one(replica: int, _params=params, _eps=eps, _k=k_max, _g=grid_n, _ti=ti):
            stream = philox_stream(cfg.seed, (_ti << 32) + replica)
            if cfg.estimator == "circular":
                return _replica_w1_circular(_params, stream)
            if cfg.estimator == "discrete_ot":
                return _replica_discrete_ot(cfg, _params, stream)
            h, _ = _replica_h_proxy(cfg, _params, stream, _eps, _k, _g)
            return math.sqrt(2.0 * cfg.dim * _eps + 4.0 * h)

        values = np.array(_run_indexed(cfg.replicas, one, threads))
        mean = float(values.mean())
        stderr = float(values.std(ddof=1) / math.sqrt(len(values)))
        rows.append((float(t_horizon), mean, stderr, cfg.replicas))

    slope, slope_se, intercept = fit_loglog_slope([(r[0], r[1], r[2]) for r in rows])
    prediction = theory.regime(cfg.alpha, cfg.dim)
    passed = abs(slope - prediction.exponent) <= cfg.slope_tol
    extras = {"eps_used": {str(k): v for k, v in eps_used.items()}}
    if prediction.log_power > 0:
        # the primary critical diagnostic: squared value * T / log T
        extras["critical_ratio_rows"] = [
            (r[0], r[1] ** 2 * r[0] / math.log(r[0])) for r in rows]
    report = RateReport(estimator=cfg.estimator, rows=rows, slope=slope,
                        slope_stderr=slope_se, intercept=intercept,
                        prediction=prediction, tolerance=cfg.slope_tol,
                        passed=passed, extras=extras)
    if cfg.out:
        write_csv(cfg.out, ["T", "mean", "stderr", "n_replicas", "estimator"],
                  [(r[0], r[1], r[2], r[3], cfg.estimator) for r in rows])
        report.csv_path = cfg.out
        _write_sidecar(cfg.out, {
            "config": _config_echo(cfg),
            "slope": slope, "slope_stderr": slope_se, "intercept": intercept,
            "prediction": asdict(prediction), "tolerance": cfg.slope_tol,
            "passed": passed, "extras": extras,
        })
    return report


# ---------------------------------------------------------------------------
# renormalization trend study

@dataclass
class RenormReport:
    rows: list                      # (T, ratio, stderr, n_replicas)
    target: float
    trend_ok: bool
    within_30pct: bool
    passed: bool
    trend_fraction: float
    csv_path: str | None = None
    extras: dict = field(default_factory=dict)


def run_renorm_experiment(cfg: ExperimentConfig) -> RenormReport:
    if cfg.kind != "renorm":
        raise ValueError("config kind must be 'renorm'")
    if abs(cfg.alpha - 0.5) > 1e-12 or cfg.dim != 3 or any(z != 0 for z in cfg.drift):
        raise ValueError("the renormalization study is stated for alpha=1/2, d=3, Z=0")
    if len(cfg.t_grid) < 2:
        raise ValueError("need at least two horizons for a trend")
    threads = _resolve_threads(cfg.threads)
    t_max = max(cfg.t_grid)
    rows = []
    crosscheck = {}
    for ti, t_horizon in enumerate(cfg.t_grid):
        eps = _eps_for(cfg, t_horizon)
        k_max = _proxy_kmax(eps, 3)
        if k_max >= KMAX_CAP[3]:
            raise ValueError(
                f"T={t_horizon} needs frequency box {k_max} >= cap {KMAX_CAP[3]}; "
                "shrink the horizon or raise the schedule constant")
        do_cross = cfg.crosscheck_replicas > 0 and t_horizon in (min(cfg.t_grid), t_max)
        grid_n = _fft_size(int(np.ceil(FFT_OVERSAMPLE * k_max)),
                           multiple=16 if do_cross else 2)
        step = min(STEP_CAP, STEP_TARGET * math.sqrt(2.0 * eps)) if cfg.step == "auto" \
            else float(cfg.step)
        params = ProcessParams(alpha=0.5, drift=(0.0, 0.0, 0.0), horizon=t_horizon,
                               step=step, start="stationary")
        n_rep = max(8, int(round(cfg.replicas * (t_max / t_horizon) ** (2.0 / 3.0))))

        def one(replica: int, _params=params, _eps=eps, _k=k_max, _g=grid_n,
                _ti=ti, _cross=do_cross):
            stream = philox_stream(cfg.seed, (_ti << 32) + replica)
            coarse_n = 16 if (_cross and replica < cfg.crosscheck_replicas) else None
            return _replica_h_proxy(cfg, _params, stream, _eps, _k, _g, coarse_n=coarse_n)

        results = _run_indexed(n_rep, one, threads)
        proxies = np.array([r[0] for r in results])
        t_eff = params.horizon_effective
        ratios = t_eff * proxies / math.log(t_eff)
        mean = float(ratios.mean())
        stderr = float(ratios.std(ddof=1) / math.sqrt(len(ratios)))
        rows.append((float(t_horizon), mean, stderr, n_rep))
        if do_cross:
            uppers, lowers = [], []
            for _, coarse in results[: cfg.crosscheck_replicas]:
                if coarse is None:
                    continue
                emp = DiscreteMeasure(dim=3, grid_n=16, weights=coarse)
                res = wp_entropic_bracket(emp, uniform_measure(3, 16), p=2.0)
                uppers.append(res.certificate["upper"] ** 2)
                lowers.append(res.certificate["lower"] ** 2)
            if uppers:
                crosscheck[str(t_horizon)] = {
                    "w2sq_upper_mean": float(np.mean(uppers)),
                    "w2sq_lower_mean": float(np.mean(lowers)),
                    "ratio_upper": float(t_eff * np.mean(uppers) / math.log(t_eff)),
                    "method": "entropic_bracket (approximate, not used in verdicts)",
                }

    target = RENORM_TARGET * 1.0  # Vol(M) = 1 for the unit torus
    dev = [abs(r[1] - target) for r in rows]
    trend_ok = dev[-1] < dev[0]
    within = dev[-1] <= 0.30 * target
    diffs = np.diff(dev)
    trend_fraction = float(np.mean(diffs < 0)) if len(diffs) else 1.0
    report = RenormReport(rows=rows, target=target, trend_ok=trend_ok,
                          within_30pct=within, passed=trend_ok and within,
                          trend_fraction=trend_fraction,
                          extras={"crosscheck": crosscheck,
                                  "eps_policy": str(cfg.eps_policy),
                                  "renorm_beta": RENORM_BETA})
    if cfg.out:
        write_csv(cfg.out, ["T", "ratio", "stderr"],
                  [(r[0], r[1], r[2]) for r in rows])
        report.csv_path = cfg.out
        _write_sidecar(cfg.out, {
            "config": _config_echo(cfg), "target": target,
            "rows": rows, "trend_ok": trend_ok, "within_30pct": within,
            "passed": report.passed, "trend_fraction": trend_fraction,
            "extras": report.extras,
        })
    return report


# ---------------------------------------------------------------------------
# deviation-bound dominance

@dataclass
class DeviationReport:
    gamma_fitted: float
    sigma_sq: float
    m_value: float
    tables: dict                     # T -> list of (xi, tail, cp_upper, bound, role)
    dominance: bool
    extras: dict = field(default_factory=dict)
    csv_paths: list = field(default_factory=list)


def _cp_upper(hits: int, n: int, level: float = 0.99) -> float:
    if hits >= n:
        return 1.0
    return float(beta_dist.ppf(level, hits + 1, n - hits))


def run_deviation_experiment(cfg: ExperimentConfig) -> DeviationReport:
    if cfg.kind != "deviation":
        raise ValueError("config kind must be 'deviation'")
    if cfg.dim != 1:
        raise ValueError("the deviation experiment is stated for d = 1")
    if cfg.replicas < 100:
        raise ValueError("tail estimation needs at least 100 replicas")
    threads = _resolve_threads(cfg.threads)
    k = cfg.g_mode
    lam = FOUR_PI_SQ * k * k
    sigma_sq = theory.sigma_sq_eigenfunction(lam, cfg.alpha)
    m_value = theory.m_functional(theory.cosine_lp_norm, cfg.alpha, 1)

    u_cal = np.array([0.6, 1.0, 1.4, 1.8, 2.2, 2.6])
    u_val = np.array([0.8, 1.2, 1.6, 2.0, 2.4, 2.8])

    samples = {}
    for ti, t_horizon in enumerate(cfg.t_grid):
        step = _step_for(cfg, t_horizon, lam)
        params = ProcessParams(alpha=cfg.alpha, drift=cfg.drift, horizon=t_horizon,
                               step=step, start="stationary")

        def one(replica: int, _params=params, _ti=ti):
            stream = philox_stream(cfg.seed, (_ti << 32) + replica)
            acc_cos, n_pts = 0.0, 0
            for block in _iter_blocks(1, params=_params, stream=stream):
                acc_cos += np.cos(2.0 * np.pi * k * block[:, 0]).sum()
                n_pts += len(block)
            return math.sqrt(2.0) * acc_cos / n_pts

        samples[t_horizon] = np.abs(np.array(_run_indexed(cfg.replicas, one, threads)))

    # one global gamma per experiment: fitted on the calibration grid, frozen
    gamma_req = []
    grids = {}
    for t_horizon, a_abs in samples.items():
        sd = math.sqrt(theory.psi_second_moment_symmetric(lam, cfg.alpha, t_horizon)
                       / t_horizon)
        xi_cal = u_cal * sd
        xi_val = u_val * sd
        grids[t_horizon] = (xi_cal, xi_val)
        n = len(a_abs)
        for xi in xi_cal:
            upper = _cp_upper(int(np.sum(a_abs > xi)), n)
            if upper >= 2.0:
                continue
            need = t_horizon * xi * xi / math.log(2.0 / upper) if upper < 2.0 else 0.0
            gamma_req.append((need - 2.0 * sigma_sq) / (m_value * xi))
    gamma_fitted = max(GAMMA_FLOOR, GAMMA_SAFETY * max(gamma_req, default=0.0))
    params_dev = theory.DeviationParams(sigma_sq=sigma_sq, m=m_value,
                                        gamma=gamma_fitted, h_norm=1.0)

    tables = {}
    dominance = True
    gauss_diag = {}
    for t_horizon, a_abs in samples.items():
        xi_cal, xi_val = grids[t_horizon]
        n = len(a_abs)
        table = []
        # xi beyond sup|g| = sqrt(2): the tail is exactly zero and dominance is
        # trivial (tail <= bound); the CP bound cannot resolve below ~4.6/n
        # there, so the point sits outside the CP-validation grid.
        points = [(x, "calibration") for x in xi_cal] + \
                 [(x, "validation") for x in xi_val] + [(1.5, "trivial")]
        for xi, role in points:
            hits = int(np.sum(a_abs > xi))
            tail = hits / n
            upper = _cp_upper(hits, n)
            bound = theory.bernstein_bound(t_horizon, xi, params_dev)
            if role == "validation" and upper > bound + 1e-15:
                dominance = False
            if role == "trivial" and tail > bound:
                dominance = False
            table.append((float(xi), tail, upper, bound, role))
        table.sort(key=lambda row: row[0])
        tables[t_horizon] = table
        # Gaussian-regime diagnostic at a mid tail point
        sd = math.sqrt(theory.psi_second_moment_symmetric(lam, cfg.alpha, t_horizon)
                       / t_horizon)
        xi0 = 2.2 * sd
        tail0 = float(np.mean(a_abs > xi0))
        if tail0 > 0:
            gauss_diag[str(t_horizon)] = {
                "xi": xi0,
                "neg_log_tail_over_T_xi_sq": -math.log(tail0) / (t_horizon * xi0 ** 2),
                "one_over_two_sigma_sq": 1.0 / (2.0 * sigma_sq),
            }

    report = DeviationReport(gamma_fitted=gamma_fitted, sigma_sq=sigma_sq,
                             m_value=m_value, tables=tables, dominance=dominance,
                             extras={"gaussian_diagnostic": gauss_diag,
                                     "g_mode": k, "gamma_floor": GAMMA_FLOOR,
                                     "gamma_safety": GAMMA_SAFETY})
    if cfg.out:
        stem = cfg.out[:-4] if cfg.out.endswith(".csv") else cfg.out
        for t_horizon, table in tables.items():
            path = f"{stem}_T{int(t_horizon)}.csv"
            write_csv(path, ["xi", "empirical_tail", "cp_upper", "bound"],
                      [(r[0], r[1], r[2], r[3]) for r in table])
            report.csv_paths.append(path)
        _write_sidecar(stem + ".csv" if not cfg.out.endswith(".csv") else cfg.out, {
            "config": _config_echo(cfg), "gamma_fitted": gamma_fitted,
            "sigma_sq": sigma_sq, "m": m_value, "dominance": dominance,
            "extras": report.extras,
            "tables": {str(t): tab for t, tab in tables.items()},
        })
    return report


# ---------------------------------------------------------------------------
# deterministic selftest

@dataclass
class SelftestReport:
    rows: list                      # (name, value, expected, tol, passed)
    passed: bool


def _selftest_rows(seed: int) -> list:
    rng = np.random.default_rng(seed)
    rows = []

    def add(name, value, expected, tol):
        rows.append((name, float(value), float(expected), float(tol),
                     bool(abs(value - expected) <= tol)))

    # (a) drift-variance identity on 100 random instances
    resid = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        mode = rng.integers(-3, 4, size=d)
        if not np.any(mode):
            mode[0] = 1
        alpha = float(rng.uniform(0.3, 1.0))
        drift = rng.uniform(-1.0, 1.0, size=d)
        a, b = theory.variance_const_drift(mode, alpha, drift)
        resid = max(resid, abs(a - b))
    add("drift-variance identity residual", resid, 0.0, 1e-12)

    # (b) heat-kernel duality on 100 random (t, x, y), d <= 3
    models = {1: build_torus_spectrum(1, 40), 2: build_torus_spectrum(2, 300),
              3: build_torus_spectrum(3, 2600)}
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 4))
        t = float(rng.uniform(0.01, 1.0))
        x, y = rng.random(d), rng.random(d)
        ps = heat_kernel(models[d], t, x, y, method="spectral")
        pi = heat_kernel(models[d], t, x, y, method="image")
        worst = max(worst, abs(ps - pi))
    add("heat-kernel spectral vs image", worst, 0.0, 1e-8)

    # (c) d=3 heat trace against the short-time expansion at eps = 1e-3
    model3 = models[3]
    trace, weyl = theory.heat_trace_weyl_check(model3, 1e-3)
    add("heat trace x (4 pi eps)^{3/2}", trace / weyl, 1.0, 0.02)

    # (d) bounded remainder of the logarithmic asymptote (d=3)
    remainders = [theory.spectral_sum(model3, e, 1.5) - theory.renorm_log_prediction(1.0, e)
                  for e in (1e-3, 1e-4, 1e-5)]
    spread = (max(remainders) - min(remainders)) / abs(np.mean(remainders))
    add("log-asymptote remainder spread", spread, 0.0, 0.25)

    # (e) gradient-functional quadrature equals 4 x spectral proxy (p = 2)
    worst = 0.0
    for d in (1, 2):
        model = models[d] if d > 1 else build_torus_spectrum(1, 24)
        n_modes = min(24, model.truncation)
        coeffs = rng.uniform(-0.5, 0.5, size=n_modes)
        spec = EmpiricalSpectrum(coeffs=coeffs, eigenvalues=model.eigenvalues[:n_modes],
                                 horizon=10.0, dim=d, model_signature=model.signature())
        quad = w2_upper_bound_functional(spec, model, eps=0.01, p=2.0)
        proxy = spectral_h_proxy(spec, eps=0.01)
        worst = max(worst, abs(quad - 4.0 * proxy) / max(4.0 * proxy, 1e-300))
    add("p=2 quadrature vs 4x proxy (rel)", worst, 0.0, 1e-8)

    # (f) subordinator Laplace transform, alpha = 1/2 (z-scores over 1e5 draws)
    from .simulate import sample_stable_increment
    draws = sample_stable_increment(0.5, 1.0, rng, size=100_000)
    worst = 0.0
    for c in (0.5, 1.0, 4.0):
        vals = np.exp(-c * draws)
        z = abs(vals.mean() - math.exp(-math.sqrt(c))) / (vals.std(ddof=1) / math.sqrt(len(vals)))
        worst = max(worst, z)
    add("stable Laplace-transform max |z|", worst, 0.0, 3.0)

    # (g) circular W1 against the coupling LP on 8-atom instances
    worst = 0.0
    for _ in range(8):
        xs, ys = rng.random(8), rng.random(8)
        ws = rng.random(8); ws /= ws.sum()
        vs = rng.random(8); vs /= vs.sum()
        w_circ = w1_circle_exact((xs, ws), (ys, vs)).value
        w_lp = w_lp_reference((xs, ws), (ys, vs), p=1.0).value
        worst = max(worst, abs(w_circ - w_lp))
    add("circular W1 vs coupling LP", worst, 0.0, 1e-9)

    return rows


def run_selftest(seed: int = 20260810, verbose: bool = True) -> SelftestReport:
    """Deterministic identity suite; prints one row per identity."""
    rows = _selftest_rows(seed)
    passed = all(r[4] for r in rows)
    if verbose:
        width = max(len(r[0]) for r in rows)
        print(f"{'identity':<{width}}  {'computed':>13} {'expected':>10} {'tol':>8}  verdict")
        for name, value, expected, tol, ok in rows:
            print(f"{name:<{width}}  {value:13.6g} {expected:10.6g} {tol:8.0e}  "
                  f"{'PASS' if ok else 'FAIL'}")
        print(f"selftest: {'PASS' if passed else 'FAIL'}")
    return SelftestReport(rows=rows, passed=passed)
