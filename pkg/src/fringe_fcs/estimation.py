"""Phase assignment for snapshots, Cramér-Rao widths, calibration and p(θ)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted
from statsmodels.stats.diagnostic import normal_ad

from .binning import BinGrid, BinnedComponents, Snapshot
from .exceptions import DegenerateObjectiveError, GridError, ZeroInformationError
from .physics import TWO_PI, CloudSpec, TwoCloudState, reduce_phase
from .sampling import SamplerConfig, SnapshotSampler, counts_array

SCAN_POINTS = 256
PHASE_TOL = 1e-6
FLAT_TOL = 1e-12
ZERO_INFORMATION = 1e-30
ENTROPY_FLOOR = 1e-30
NODE_RTOL = 1e-10
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_SHOT_CHUNK = 256


def wrap_angle(delta):
    """Signed circular difference in (-pi, pi]."""
    out = np.mod(np.asarray(delta, dtype=float) + np.pi, TWO_PI) - np.pi
    return np.where(out == -np.pi, np.pi, out)


# ---------------------------------------------------------------- objectives

def lstsq_objective(counts: np.ndarray, comps: BinnedComponents):
    """D(θ) = Σ_k (n_k - ρ_k(θ))^2 for each row of counts."""
    counts = np.asarray(counts, dtype=float)

    def objective(theta):
        resid = counts[:, None, :] - comps.rho(theta)
        return np.einsum("smk,smk->sm", resid, resid)

    return objective


def mle_objective(counts: np.ndarray, comps: BinnedComponents):
    """Negative multinomial log-likelihood, -Σ_k n_k ln p_k(θ) (up to θ-free terms)."""
    counts = np.asarray(counts, dtype=float)

    def objective(theta):
        rho = np.clip(comps.rho(theta), 1e-300, None)
        logp = np.log(rho) - np.log(rho.sum(axis=-1, keepdims=True))
        return -np.einsum("sk,smk->sm", counts, logp)

    return objective


OBJECTIVES = {"lstsq": lstsq_objective, "mle": mle_objective}


def circular_argmin(objective, rows: int, scan_points: int = SCAN_POINTS, tol: float = PHASE_TOL):
    """Global minimiser over the circle, one per row.

    ``objective(theta)`` maps phases of shape (rows, m) to values of the same
    shape. A coarse scan picks the best node (first one on ties), golden
    section refines inside its two neighbours until the bracket is below
    ``tol``. Returns (theta_hat, value, flat) where ``flat`` marks rows whose
    objective did not vary across the scan.
    """
    step = TWO_PI / scan_points
    grid = np.broadcast_to(step * np.arange(scan_points), (rows, scan_points))
    values = objective(grid)
    best = np.argmin(values, axis=1)
    vmax, vmin = values.max(axis=1), values.min(axis=1)
    flat = (vmax - vmin) <= FLAT_TOL * np.maximum(np.abs(vmax), 1.0)

    lo = (best - 1) * step
    hi = (best + 1) * step
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc = objective(c[:, None])[:, 0]
    fd = objective(d[:, None])[:, 0]
    iterations = int(math.ceil(math.log(tol / (2 * step)) / math.log(_GOLDEN)))
    for _ in range(max(iterations, 0)):
        left = fc <= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = hi - _GOLDEN * (hi - lo)
        new_d = lo + _GOLDEN * (hi - lo)
        probe = np.where(left, new_c, new_d)
        fp = objective(probe[:, None])[:, 0]
        c, d, fc, fd = (
            np.where(left, new_c, d),
            np.where(left, c, new_d),
            np.where(left, fp, fd),
            np.where(left, fc, fp),
        )
    theta = 0.5 * (lo + hi)
    value = objective(theta[:, None])[:, 0]
    scan_best = values[np.arange(rows), best]
    worse = value > scan_best
    theta = np.where(worse, best * step, theta)
    value = np.where(worse, scan_best, value)
    return reduce_phase(theta), value, flat


def fit_phases(counts: np.ndarray, comps: BinnedComponents, method: str = "lstsq",
               scan_points: int = SCAN_POINTS, tol: float = PHASE_TOL):
    """Vectorised phase fit; returns (theta_hat, objective value, degenerate mask)."""
    counts = np.atleast_2d(np.asarray(counts, dtype=float))
    if counts.shape[1] != comps.d1.size:
        raise GridError(f"snapshots have {counts.shape[1]} bins, model has {comps.d1.size}")
    make = OBJECTIVES[method]
    theta = np.empty(len(counts))
    value = np.empty(len(counts))
    flat = np.empty(len(counts), dtype=bool)
    for start in range(0, len(counts), _SHOT_CHUNK):
        block = counts[start:start + _SHOT_CHUNK]
        t, v, f = circular_argmin(make(block, comps), len(block), scan_points, tol)
        theta[start:start + len(block)] = t
        value[start:start + len(block)] = v
        flat[start:start + len(block)] = f
    return theta, value, flat


@dataclass(frozen=True)
class PhaseEstimate:
    theta_hat: float
    residual: float
    sigma_cr: float

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be non-negative")
        if not self.sigma_cr > 0:
            raise ValueError("sigma_cr must be positive")


def fit_phase(snapshot: Snapshot, state: TwoCloudState, bins: BinGrid, method: str = "lstsq") -> PhaseEstimate:
    """Least-squares phase of one snapshot: argmin_θ Σ_k (n_k - ρ_k(θ))^2."""
    if snapshot.total != state.n:
        raise ValueError(f"snapshot holds {snapshot.total} particles, state has {state.n}")
    comps = BinnedComponents.from_state(state, bins)
    theta, value, flat = fit_phases(snapshot.counts[None, :], comps, method)
    if flat[0]:
        raise DegenerateObjectiveError("phase objective is flat: the clouds do not interfere")
    return PhaseEstimate(float(theta[0]), float(value[0]), fisher_sigma(state, float(theta[0])))


class PhaseEstimator(BaseEstimator):
    """Assigns a phase to each snapshot row of a count matrix.

    Parameters
    ----------
    state : TwoCloudState
        Model whose partial densities ρ_θ the counts are compared with.
    bins : BinGrid
        Binning that produced the counts.
    method : {"lstsq", "mle"}
        Euclidean distance to ρ_θ (default) or multinomial maximum likelihood.
    scan_points : int
        Coarse scan resolution before golden-section refinement.
    tol : float
        Final bracket width in radians.
    """

    def __init__(self, state=None, bins=None, method="lstsq", scan_points=SCAN_POINTS, tol=PHASE_TOL):
        self.state = state
        self.bins = bins
        self.method = method
        self.scan_points = scan_points
        self.tol = tol

    def fit(self, X=None, y=None):
        if self.state is None or self.bins is None:
            raise ValueError("PhaseEstimator needs both a state and a bin grid")
        if self.method not in OBJECTIVES:
            raise ValueError(f"unknown method {self.method!r}")
        self.components_ = BinnedComponents.from_state(self.state, self.bins)
        self.n_features_in_ = self.bins.k
        if X is not None:
            self._validate(X)
        return self

    def _validate(self, X):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} bins, estimator expects {self.n_features_in_}")
        totals = X.sum(axis=1)
        if np.any(totals != self.state.n):
            raise ValueError(f"every snapshot must hold N = {self.state.n} particles")
        return X

    def _fit_rows(self, X):
        check_is_fitted(self, "components_")
        X = self._validate(X)
        return fit_phases(X, self.components_, self.method, self.scan_points, self.tol)

    def predict(self, X):
        """Phase estimates in [0, 2π); NaN for rows with a flat objective."""
        theta, _, flat = self._fit_rows(X)
        return np.where(flat, np.nan, theta)

    def transform(self, X):
        """Columns (theta_hat, residual, sigma_cr); NaN rows where degenerate."""
        theta, value, flat = self._fit_rows(X)
        sigma = np.full(theta.shape, np.nan)
        ok = ~flat
        if ok.any():
            sigma[ok] = fisher_sigma(self.state, theta[ok])
        out = np.column_stack([theta, value, sigma])
        out[flat] = np.nan
        return out

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


# ------------------------------------------------------- Fisher information

def _cross(state: TwoCloudState, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return np.exp(1j * reduce_phase(theta))[..., None] * (state.mode1.values * np.conj(state.mode2.values))


def _at_node(rho, incoherent) -> np.ndarray:
    """Lattice points sitting on an exact fringe node, where ρ is pure roundoff.

    There (∂ρ)^2/ρ is 0/0 numerically; its limit is 2(|φ1|^2 + |φ2|^2)
    because ρ can only vanish where |φ1| = |φ2|.
    """
    return rho <= NODE_RTOL * incoherent


def density_derivative(state: TwoCloudState, theta) -> np.ndarray:
    """∂ρ_θ/∂θ = -2 Im(e^{iθ} φ1 conj(φ2))."""
    return -2.0 * _cross(state, theta).imag


def _chunked(func, state: TwoCloudState, theta, *args):
    """Evaluate ``func`` over a long phase vector in blocks to bound memory."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size <= _SHOT_CHUNK:
        return func(state, theta, *args)
    return np.concatenate([func(state, theta[i:i + _SHOT_CHUNK], *args)
                           for i in range(0, theta.size, _SHOT_CHUNK)])


def fisher_information(state: TwoCloudState, theta) -> np.ndarray:
    """∫ ρ_θ (∂_θ ln ρ_θ)^2 dx = ∫ (∂_θ ρ_θ)^2 / ρ_θ dx."""
    return _chunked(_fisher_efg, state, theta)


def _fisher_efg(state: TwoCloudState, theta) -> np.ndarray:
    z = _cross(state, theta)
    incoherent = np.abs(state.mode1.values) ** 2 + np.abs(state.mode2.values) ** 2
    rho = incoherent + 2.0 * z.real
    drho = -2.0 * z.imag
    node = _at_node(rho, incoherent)
    integrand = np.divide(drho**2, rho, out=np.zeros_like(rho), where=~node)
    integrand = np.where(node, 2.0 * incoherent, integrand)
    return integrand @ state.lattice.weights


def fisher_information_wavefunction(state: TwoCloudState, theta, prefactor: float = 2.0) -> np.ndarray:
    """Same information written through the mode functions.

    With z = e^{iθ} φ1 conj(φ2):
    I = prefactor * ∫ (|φ1|^2 |φ2|^2 - Re z^2) / (|φ1|^2 + |φ2|^2 + 2 Re z) dx.
    Expanding (∂ρ)^2 = 4 (Im z)^2 = 2 (|z|^2 - Re z^2) fixes the prefactor at 2.
    """
    return _chunked(_fisher_dhg, state, theta, prefactor)


def _fisher_dhg(state: TwoCloudState, theta, prefactor: float) -> np.ndarray:
    p1 = np.abs(state.mode1.values) ** 2
    p2 = np.abs(state.mode2.values) ** 2
    z = _cross(state, theta)
    num = p1 * p2 - (z * z).real
    den = p1 + p2 + 2.0 * z.real
    node = _at_node(den, p1 + p2)
    integrand = np.divide(num, den, out=np.zeros_like(den), where=~node)
    integrand = np.where(node, p1 + p2, integrand)
    return prefactor * (integrand @ state.lattice.weights)


def fisher_sigma(state: TwoCloudState, theta):
    """Cramér-Rao width σ_θ = I(θ)^{-1/2}; accepts a scalar or an array of phases."""
    info = np.asarray(fisher_information(state, theta))
    if np.any(info < ZERO_INFORMATION):
        raise ZeroInformationError("Fisher information vanishes: the clouds do not overlap")
    sigma = 1.0 / np.sqrt(info)
    return float(sigma) if sigma.ndim == 0 else sigma


class AsymptoticSigma(NamedTuple):
    value: float
    in_regime: bool


def asymptotic_sigma(spec1: CloudSpec, spec2: CloudSpec) -> AsymptoticSigma:
    """Order-of-magnitude phase uncertainty for weakly overlapping clouds.

    σ ~ exp[d^2 / (2 a |a_tau|)] / (N1 N2)^{1/4}; only a scaling guide.
    ``in_regime`` is False when |a_tau| >= d^2 / a (overlap not small).
    """
    a = spec1.width
    a_tau = abs(spec1.complex_width)
    d = 0.5 * (spec1.offset + spec2.offset)
    value = math.exp(d * d / (2.0 * a * a_tau)) / (spec1.n * spec2.n) ** 0.25
    return AsymptoticSigma(value, a_tau < d * d / a)


# ------------------------------------------------------------- calibration

def circular_summary(theta) -> tuple[float, float]:
    theta = np.asarray(theta, dtype=float)
    return float(stats.circmean(theta)), float(stats.circstd(theta))


@dataclass(frozen=True)
class Calibration:
    theta_true: float
    theta_hat: np.ndarray
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    circular_mean: float
    circular_std: float
    sigma_cr: float
    normality_p: float

    @property
    def shots(self) -> int:
        return int(self.hist_counts.sum())

    @property
    def bias(self) -> float:
        return float(wrap_angle(self.circular_mean - self.theta_true))


def _estimate_batch(state, bins, config: SamplerConfig, method: str):
    records = SnapshotSampler(state, bins, config).batch()
    comps = BinnedComponents.from_state(state, bins)
    theta, _, flat = fit_phases(counts_array(records), comps, method)
    return records, theta, flat


def calibrate(state: TwoCloudState, bins: BinGrid, theta_true: float, shots: int, seed: int,
              method: str = "lstsq", hist_bins: int = 32, workers: int = 1) -> Calibration:
    """Empirical W_θ'(θ): estimates from shots generated at a pinned phase."""
    if shots < 100:
        raise ValueError("calibration needs at least 100 shots")
    theta_true = float(reduce_phase(theta_true))
    config = SamplerConfig(shots=shots, seed=seed, pin_theta=theta_true, workers=workers)
    _, theta, flat = _estimate_batch(state, bins, config, method)
    if flat.any():
        raise DegenerateObjectiveError("calibration state has a flat phase objective")
    dev = wrap_angle(theta - theta_true)
    edges = theta_true + np.linspace(-np.pi, np.pi, hist_bins + 1)
    counts, _ = np.histogram(dev + theta_true, bins=edges)
    mean, std = circular_summary(theta)
    _, p_norm = normal_ad(dev)
    return Calibration(theta_true, theta, counts, edges, mean, std,
                       fisher_sigma(state, theta_true), float(p_norm))


@dataclass(frozen=True)
class PhaseHistogram:
    counts: np.ndarray
    edges: np.ndarray
    chi2: float
    p_value: float
    verdict: str
    degenerate: int = 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


MIN_EXPECTED_PER_BIN = 5


def phase_histogram(theta_hat, n_bins: int = 16, alpha: float = 0.01, degenerate: int = 0) -> PhaseHistogram:
    """Circular histogram of phase estimates with a χ² test against p(θ) = 1/2π."""
    theta_hat = reduce_phase(np.asarray(theta_hat, dtype=float))
    edges = np.linspace(0.0, TWO_PI, n_bins + 1)
    counts, _ = np.histogram(theta_hat, bins=edges)
    if theta_hat.size < MIN_EXPECTED_PER_BIN * n_bins:
        return PhaseHistogram(counts, edges, math.nan, math.nan, "insufficient-data", degenerate)
    chi2, p = stats.chisquare(counts)
    verdict = "uniform" if p > alpha else "non-uniform"
    return PhaseHistogram(counts, edges, float(chi2), float(p), verdict, degenerate)


def p_theta_distribution(state: TwoCloudState, bins: BinGrid, shots: int, seed: int,
                         pin_theta: float | None = None, n_bins: int = 16,
                         method: str = "lstsq", workers: int = 1) -> PhaseHistogram:
    """Distribution of assigned phases over mixture shots (hidden phase uniform).

    ``pin_theta`` fixes the hidden phase instead, a diagnostic negative control.
    """
    config = SamplerConfig(shots=shots, seed=seed, pin_theta=pin_theta, workers=workers)
    _, theta, flat = _estimate_batch(state, bins, config, method)
    return phase_histogram(theta[~flat], n_bins, degenerate=int(flat.sum()))


# ---------------------------------------------------------------- entropy

def partial_entropy(state: TwoCloudState, theta):
    """-∫ ρ_θ ln ρ_θ dx over points where ρ_θ > 1e-30 (additive constant fixed to 0)."""
    z = _cross(state, theta)
    rho = np.abs(state.mode1.values) ** 2 + np.abs(state.mode2.values) ** 2 + 2.0 * z.real
    keep = rho > ENTROPY_FLOOR
    integrand = np.where(keep, -rho * np.log(np.where(keep, rho, 1.0)), 0.0)
    s = integrand @ state.lattice.weights
    return float(s) if np.ndim(s) == 0 else s


# ---------------------------------------------------------- fringe images

def overlap_window(comps: BinnedComponents, fraction: float = 0.01) -> np.ndarray:
    """Bins where both clouds carry at least ``fraction`` of the peak joint weight."""
    joint = np.minimum(comps.d1, comps.d2)
    return joint >= fraction * joint.max()


def fringe_contrast(counts, window) -> np.ndarray:
    """(max - min) / (max + min) of each count row inside the window."""
    c = np.atleast_2d(np.asarray(counts, dtype=float))[:, np.asarray(window)]
    hi, lo = c.max(axis=1), c.min(axis=1)
    return np.divide(hi - lo, hi + lo, out=np.zeros_like(hi), where=(hi + lo) > 0)


def fringe_wavevector_estimate(counts, background, centers, q_max: float | None = None,
                               q_min: float = 0.05, resolution: float = 1e-3) -> np.ndarray:
    """Peak of the discrete-time Fourier transform of (counts - background) per row."""
    centers = np.asarray(centers, dtype=float)
    if q_max is None:
        q_max = np.pi / np.min(np.diff(centers))
    q = np.arange(q_min, q_max, resolution)
    resid = np.atleast_2d(np.asarray(counts, dtype=float)) - np.asarray(background, dtype=float)
    spectrum = np.abs(resid @ np.exp(-1j * np.outer(centers, q)))
    return q[np.argmax(spectrum, axis=1)]
