"""Exact counting statistics of two Fock-state clouds.

Production route: the closed form

    P({n}) = C  ∬ dθ dθ' / (2πN)^2  Π_k μ_k(θ, θ')^{n_k} / n_k!,
    C = N1! N2! / (N1^N1 N2^N2),
    μ_k(θ, θ') = ∫_bin k  conj(ψ_θ'(x)) ψ_θ(x) dx,
    ψ_θ = e^{i ν2 θ} φ1 + e^{-i ν1 θ} φ2,

obtained from the phase-tagged generating function by doing the per-bin
λ integrals analytically (the n-th Fourier coefficient of exp(z e^{iλ}) is
z^n / n!).  Two oracles check it: a direct integration of |ψ(x1..xN)|^2
over the count region, and a numerical Fourier inversion of the generating
function on a λ lattice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln
from scipy.stats import multinomial

from .binning import BinGrid, BinnedComponents, Snapshot
from .exceptions import DomainError, GridError, QuadratureError
from .physics import TWO_PI, TwoCloudState

CONVERGENCE_TOL = 1e-6
# stands in for log(0); finite so that 0 * LOG_ZERO == 0 inside matmuls
LOG_ZERO = -1e300
_CHUNK = 1 << 21


@dataclass(frozen=True)
class QuadratureSpec:
    """How the (θ, θ') double integral and the oracle λ lattice are discretised.

    ``rule="periodic"`` uses a uniform rule on [0, 2π). With Σn_k = N the
    integrand is a trigonometric polynomial in θ and θ' whose frequencies
    lie in [-N1, N2], so this rule is exact once ``theta_nodes > max(N1, N2)``.
    ``rule="gauss-legendre"`` integrates the enlarged region [0, 2πN] with
    composite Gauss-Legendre panels (default 64 N nodes per axis) and checks
    convergence by node doubling.
    """

    rule: str = "periodic"
    theta_nodes: int | None = None
    panel_nodes: int = 16
    lambda_nodes: int | None = None
    check_convergence: bool = True

    def __post_init__(self):
        if self.rule not in ("periodic", "gauss-legendre"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.theta_nodes is not None and self.theta_nodes < 16:
            raise ValueError("theta_nodes must be at least 16")
        if self.panel_nodes < 2:
            raise ValueError("panel_nodes must be at least 2")

    def nodes(self, n1: int, n2: int, theta_nodes: int | None = None):
        """Phase nodes and weights; weights sum to one (normalised measure)."""
        n = n1 + n2
        count = theta_nodes or self.theta_nodes
        if self.rule == "periodic":
            if count is None:
                count = max(16, max(n1, n2) + 1)
            if count <= max(n1, n2):
                raise QuadratureError(f"periodic rule needs more than max(N1, N2) = {max(n1, n2)} nodes")
            return TWO_PI * np.arange(count) / count, np.full(count, 1.0 / count)
        if count is None:
            count = 64 * n
        panels = -(-count // self.panel_nodes)
        x, w = np.polynomial.legendre.leggauss(self.panel_nodes)
        length = TWO_PI * n / panels
        starts = length * np.arange(panels)
        nodes = (starts[:, None] + 0.5 * length * (x + 1.0)).ravel()
        weights = np.tile(0.5 * length * w, panels) / (TWO_PI * n)
        return nodes, weights


class OverlapKernel:
    """Per-bin complex masses μ_k(θ, θ') = ∫_k conj(ψ_θ') ψ_θ."""

    def __init__(self, state: TwoCloudState, bins: BinGrid):
        self.components = BinnedComponents.from_state(state, bins)
        self.nu1 = state.nu1
        self.nu2 = state.nu2

    @property
    def k(self) -> int:
        return self.components.d1.size

    def __call__(self, theta, theta_p) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)[..., None]
        theta_p = np.asarray(theta_p, dtype=float)[..., None]
        c = self.components
        u = theta - theta_p
        return (
            np.exp(1j * self.nu2 * u) * c.d1
            + np.exp(-1j * self.nu1 * u) * c.d2
            + np.exp(-1j * (self.nu1 * theta + self.nu2 * theta_p)) * np.conj(c.cross)
            + np.exp(1j * (self.nu2 * theta + self.nu1 * theta_p)) * c.cross
        )

    def grid(self, nodes: np.ndarray) -> np.ndarray:
        """μ on the tensor grid of nodes, flattened to shape (L*L, K)."""
        return self(nodes[:, None], nodes[None, :]).reshape(-1, self.k)


def _log_prefactor(n1: int, n2: int) -> float:
    return float(gammaln(n1 + 1) + gammaln(n2 + 1) - n1 * math.log(n1) - n2 * math.log(n2))


def _safe_log(z: np.ndarray) -> np.ndarray:
    out = np.full(z.shape, LOG_ZERO, dtype=complex)
    nz = z != 0
    out[nz] = np.log(z[nz])
    return out


def _weighted_exp_sum(log_terms: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Σ_j w_j exp(log_terms[s, j]) per row, scaled by the row maximum for safety."""
    shift = log_terms.real.max(axis=1, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    return np.exp(shift[:, 0]) * (np.exp(log_terms - shift) @ weights)


def _as_counts(snapshots, k: int) -> np.ndarray:
    if isinstance(snapshots, Snapshot):
        counts = snapshots.counts[None, :]
    else:
        counts = np.array([s.counts if isinstance(s, Snapshot) else s for s in snapshots], dtype=np.int64)
        counts = counts.reshape(-1, k) if counts.size else counts.reshape(0, k)
    if counts.shape[1] != k:
        raise GridError(f"snapshot has {counts.shape[1]} bins, bin grid has {k}")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    return counts


def _closed_form(kernel: OverlapKernel, n1: int, n2: int, counts: np.ndarray, nodes, weights) -> np.ndarray:
    log_mu = _safe_log(kernel.grid(nodes))
    w2 = np.outer(weights, weights).ravel()
    log_norm = _log_prefactor(n1, n2) - gammaln(counts + 1).sum(axis=1)
    out = np.empty(len(counts))
    rows = max(1, _CHUNK // max(1, log_mu.shape[0]))
    for start in range(0, len(counts), rows):
        block = counts[start:start + rows]
        terms = block @ log_mu.T + log_norm[start:start + rows, None]
        out[start:start + rows] = _weighted_exp_sum(terms, w2).real
    return out


def exact_probabilities(state: TwoCloudState, bins: BinGrid, snapshots, quad: QuadratureSpec | None = None) -> np.ndarray:
    """Vectorised :func:`exact_probability` over many count strings."""
    quad = quad or QuadratureSpec()
    kernel = OverlapKernel(state, bins)
    counts = _as_counts(snapshots, bins.k)
    out = np.zeros(len(counts))
    physical = counts.sum(axis=1) == state.n
    if not physical.any():
        return out
    phys = counts[physical]
    nodes, weights = quad.nodes(state.n1, state.n2)
    values = _closed_form(kernel, state.n1, state.n2, phys, nodes, weights)
    if quad.rule == "gauss-legendre" and quad.check_convergence:
        nodes2, weights2 = quad.nodes(state.n1, state.n2, theta_nodes=2 * len(nodes))
        finer = _closed_form(kernel, state.n1, state.n2, phys, nodes2, weights2)
        worst = float(np.max(np.abs(finer - values)))
        if worst > CONVERGENCE_TOL:
            raise QuadratureError(f"phase quadrature changed by {worst:.2e} under node doubling")
        values = finer
    out[physical] = np.clip(values, 0.0, 1.0)
    return out


def exact_probability(state: TwoCloudState, bins: BinGrid, snapshot: Snapshot, quad: QuadratureSpec | None = None) -> float:
    """Probability of the count string ``snapshot``; exactly 0 unless Σn_k = N."""
    return float(exact_probabilities(state, bins, [snapshot], quad)[0])


def _generating_values(kernel: OverlapKernel, n1: int, n2: int, lambdas: np.ndarray, nodes, weights) -> np.ndarray:
    n = n1 + n2
    mu = kernel.grid(nodes)
    w2 = np.outer(weights, weights).ravel()
    out = np.empty(len(lambdas), dtype=complex)
    rows = max(1, _CHUNK // max(1, mu.shape[0]))
    for start in range(0, len(lambdas), rows):
        tags = np.exp(1j * lambdas[start:start + rows])
        tagged = tags @ mu.T
        terms = n * _safe_log(tagged) + (_log_prefactor(n1, n2) - gammaln(n + 1))
        out[start:start + rows] = _weighted_exp_sum(terms, w2)
    return out


def _check_lambda(lam, k: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != k:
        raise GridError(f"lambda field needs one phase per bin ({k})")
    return np.mod(lam, TWO_PI)


def generating_function(state: TwoCloudState, bins: BinGrid, lam: Sequence[float], quad: QuadratureSpec | None = None) -> complex:
    """Φ({λ}) = <Ψ| exp(i Σ_k λ_k n̂_k) |Ψ> for a piecewise-constant tagging field.

    Only the N-particle sector of the coherent-state expansion contributes,
    so Φ = C ∬ [Σ_k e^{iλ_k} μ_k(θ, θ')]^N / N!.
    """
    quad = quad or QuadratureSpec()
    kernel = OverlapKernel(state, bins)
    lam = _check_lambda(lam, bins.k)[None, :]
    nodes, weights = quad.nodes(state.n1, state.n2)
    value = _generating_values(kernel, state.n1, state.n2, lam, nodes, weights)[0]
    if quad.rule == "gauss-legendre" and quad.check_convergence:
        nodes2, weights2 = quad.nodes(state.n1, state.n2, theta_nodes=2 * len(nodes))
        finer = _generating_values(kernel, state.n1, state.n2, lam, nodes2, weights2)[0]
        if abs(finer - value) > CONVERGENCE_TOL:
            raise QuadratureError(f"generating function changed by {abs(finer - value):.2e} under node doubling")
        value = finer
    return complex(value)


def lambda_lattice_probability(state: TwoCloudState, bins: BinGrid, snapshot: Snapshot,
                               quad: QuadratureSpec | None = None) -> float:
    """Oracle: discrete Fourier inversion of Φ over an L^K lattice of tagging phases.

    Φ is a trigonometric polynomial with frequencies 0..N in each λ_k, so the
    discrete sum is exact for L > N. No shortcut for Σn_k != N: the lattice
    sum itself has to return zero there.
    """
    quad = quad or QuadratureSpec()
    if bins.k > 3:
        raise DomainError("the lambda-lattice oracle supports at most 3 bins")
    counts = _as_counts(snapshot, bins.k)[0]
    size = quad.lambda_nodes or max(state.n, int(counts.max())) + 1
    if size <= state.n:
        raise DomainError(f"lambda lattice of {size} nodes aliases frequencies up to N = {state.n}")
    if size <= counts.max():
        raise DomainError("lambda lattice too coarse for the requested counts")
    axis = TWO_PI * np.arange(size) / size
    lambdas = np.array(list(itertools.product(axis, repeat=bins.k)))
    kernel = OverlapKernel(state, bins)
    nodes, weights = quad.nodes(state.n1, state.n2)
    phi = _generating_values(kernel, state.n1, state.n2, lambdas, nodes, weights)
    value = np.mean(np.exp(-1j * (lambdas @ counts)) * phi)
    return float(value.real)


def _bin_overlaps(state: TwoCloudState, bins: BinGrid) -> np.ndarray:
    """G[k, a, b] = ∫_k conj(u_a) u_b for the two unit-norm orbitals u_1, u_2."""
    u = np.stack([state.mode1.values / math.sqrt(state.n1), state.mode2.values / math.sqrt(state.n2)])
    prod = np.conj(u)[:, None, :] * u[None, :, :]
    return np.moveaxis(bins.integrate(prod), -1, 0)


def _assignments(counts: np.ndarray) -> list[tuple[int, ...]]:
    """Distinct orderings of bin labels with multiplicities given by counts."""
    labels = [k for k, c in enumerate(counts) for _ in range(int(c))]
    return sorted(set(itertools.permutations(labels)))


def brute_force_probability(state: TwoCloudState, bins: BinGrid, snapshot: Snapshot, method: str = "separable") -> float:
    """Oracle: integrate |ψ(x1, ..., xN)|^2 over the region where bin k holds n_k particles.

    ψ is the normalised symmetrisation of N1 copies of u_1 and N2 copies of
    u_2. ``method="separable"`` evaluates the N-dimensional lattice
    trapezoid sum through its exact per-coordinate factorisation;
    ``method="tensor"`` sums the full M^N lattice (tiny lattices only).
    """
    if state.n > 4:
        raise DomainError("brute-force integration is limited to N <= 4")
    counts = _as_counts(snapshot, bins.k)[0]
    if counts.sum() != state.n:
        return 0.0
    orbitals = [0] * state.n1 + [1] * state.n2
    if method == "separable":
        return _brute_separable(state, bins, counts, orbitals)
    if method == "tensor":
        return _brute_tensor(state, bins, counts, orbitals)
    raise ValueError(f"unknown method {method!r}")


def _brute_separable(state, bins, counts, orbitals) -> float:
    g = _bin_overlaps(state, bins)
    gram = g.sum(axis=0)
    perms = [tuple(orbitals[i] for i in p) for p in itertools.permutations(range(len(orbitals)))]

    def region(bin_of) -> complex:
        total = 0j
        for s in perms:
            for t in perms:
                term = 1 + 0j
                for i, b in enumerate(bin_of):
                    term *= g[b, s[i], t[i]]
                total += term
        return total

    norm = 0j
    for s in perms:
        for t in perms:
            norm += np.prod([gram[s[i], t[i]] for i in range(len(s))])
    value = sum(region(b) for b in _assignments(counts))
    return float((value / norm).real)


def _brute_tensor(state, bins, counts, orbitals) -> float:
    lattice = state.lattice
    n = len(orbitals)
    if lattice.points ** n > 5_000_000:
        raise DomainError("tensor brute force needs M^N <= 5e6 lattice points")
    u = np.stack([state.mode1.values / math.sqrt(state.n1), state.mode2.values / math.sqrt(state.n2)])
    psi = np.zeros((lattice.points,) * n, dtype=complex)
    for p in itertools.permutations(range(n)):
        term = np.ones((1,) * n, dtype=complex)
        for axis, i in enumerate(p):
            shape = [1] * n
            shape[axis] = lattice.points
            term = term * u[orbitals[i]].reshape(shape)
        psi = psi + term
    dens = np.abs(psi) ** 2
    # per-bin trapezoid weight of every node; edge nodes are shared by neighbours
    eye = np.eye(lattice.points)
    bin_weights = bins.integrate(eye).T

    def contract(rows) -> float:
        out = dens
        for r in rows:
            out = np.tensordot(r, out, axes=([0], [0]))
        return float(out)

    norm = contract([lattice.weights] * n)
    value = sum(contract([bin_weights[b] for b in assign]) for assign in _assignments(counts))
    return value / norm


def partial_probability(state: TwoCloudState, bins: BinGrid, snapshot: Snapshot, theta: float) -> float:
    """Count distribution at a definite phase: multinomial with p_k ∝ binned ρ_θ.

    This is the independent-Poisson product conditioned on Σn_k = N, which
    is normalised exactly at every N.
    """
    comps = BinnedComponents.from_state(state, bins)
    counts = _as_counts(snapshot, bins.k)[0]
    if counts.sum() != state.n:
        return 0.0
    rho = np.clip(comps.rho(theta), 0.0, None)
    return float(multinomial.pmf(counts, state.n, rho / rho.sum()))


def theta_averaged_probability(state: TwoCloudState, bins: BinGrid, snapshot: Snapshot, nodes: int = 64) -> float:
    """Large-N mixture: uniform average of the partial distribution over θ."""
    comps = BinnedComponents.from_state(state, bins)
    counts = _as_counts(snapshot, bins.k)[0]
    if counts.sum() != state.n:
        return 0.0
    rho = np.clip(comps.rho(TWO_PI * np.arange(nodes) / nodes), 0.0, None)
    p = rho / rho.sum(axis=1, keepdims=True)
    return float(np.mean(multinomial.pmf(counts, state.n, p)))


def correlator(state: TwoCloudState, points: Sequence[float], order: int) -> float:
    """Density (order 1) or normally ordered pair correlation (order 2) at lattice points.

    Order 2 is <ψ†(a) ψ†(b) ψ(b) ψ(a)> for the Fock state:
    (1 - 1/N1)|φ1a φ1b|^2 + (1 - 1/N2)|φ2a φ2b|^2 + |φ1a φ2b + φ1b φ2a|^2.
    """
    lattice = state.lattice
    idx = [lattice.index_of(p) for p in points]
    p1, p2 = state.mode1.values, state.mode2.values
    if order == 1:
        if len(idx) != 1:
            raise ValueError("order 1 takes one point")
        i = idx[0]
        return float(abs(p1[i]) ** 2 + abs(p2[i]) ** 2)
    if order == 2:
        if len(idx) != 2:
            raise ValueError("order 2 takes two points")
        a, b = idx
        same1 = (1.0 - 1.0 / state.n1) * abs(p1[a]) ** 2 * abs(p1[b]) ** 2
        same2 = (1.0 - 1.0 / state.n2) * abs(p2[a]) ** 2 * abs(p2[b]) ** 2
        exchange = abs(p1[a] * p2[b] + p1[b] * p2[a]) ** 2
        return float(same1 + same2 + exchange)
    raise ValueError(f"unsupported correlator order {order}")


def binned_pair_correlation(state: TwoCloudState, bins: BinGrid, a: int, b: int) -> float:
    """<n_a n_b> for a != b, or <n_a (n_a - 1)> for a == b, from bin integrals."""
    c = BinnedComponents.from_state(state, bins)
    same1 = (1.0 - 1.0 / state.n1) * c.d1[a] * c.d1[b]
    same2 = (1.0 - 1.0 / state.n2) * c.d2[a] * c.d2[b]
    exchange = c.d1[a] * c.d2[b] + c.d1[b] * c.d2[a] + 2.0 * (c.cross[a] * np.conj(c.cross[b])).real
    return float(same1 + same2 + exchange)
