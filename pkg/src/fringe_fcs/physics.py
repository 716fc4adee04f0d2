"""Single-particle modes of the two clouds and the phase-dependent density.

Everything lives on a uniform 1D lattice and is integrated with the
trapezoid rule. Units default to hbar = m = 1 with lengths in units of
the initial cloud width, but hbar and m stay explicit so physical units
work too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridError, StateError

NORM_RTOL = 1e-6
DEFAULT_POINTS = 4097
DEFAULT_ORTHOGONALITY_TOL = 1e-3
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Lattice:
    """Uniform position grid ``x_min, ..., x_max`` with ``points`` nodes."""

    x_min: float
    x_max: float
    points: int = DEFAULT_POINTS

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise GridError("lattice needs x_max > x_min")
        if self.points < 3:
            raise GridError("lattice needs at least 3 points")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.points)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def integrate(self, values) -> float | complex:
        return np.dot(self.weights, values)

    def index_of(self, position: float, atol: float | None = None) -> int:
        """Index of the lattice node at ``position``; raises if it is off-lattice."""
        if atol is None:
            atol = 1e-9 * self.h
        i = int(round((position - self.x_min) / self.h))
        if i < 0 or i >= self.points or abs(self.x_min + i * self.h - position) > atol:
            raise GridError(f"position {position!r} is not a lattice point")
        return i


@dataclass(frozen=True)
class CloudSpec:
    """Harmonic-trap ground state released for free expansion.

    ``offset`` is the distance of the trap centre from the origin; the cloud
    sits at ``sign * offset`` once a sign is chosen in :func:`make_gaussian_mode`.
    """

    width: float = 1.0
    offset: float = 3.0
    tau: float = 10.0
    n: int = 5000
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise StateError("invariant a > 0 violated: width must be positive")
        if not self.mass > 0:
            raise StateError("invariant m > 0 violated: mass must be positive")
        if not self.hbar > 0:
            raise StateError("invariant hbar > 0 violated")
        if not self.tau >= 0:
            raise StateError("invariant tau >= 0 violated")
        if int(self.n) != self.n or self.n < 1:
            raise StateError("invariant N >= 1 (integer) violated")

    @property
    def complex_width(self) -> complex:
        """a_tau = a + i hbar tau / (m a)."""
        return complex(self.width, self.hbar * self.tau / (self.mass * self.width))

    def with_n(self, n: int) -> "CloudSpec":
        return CloudSpec(self.width, self.offset, self.tau, n, self.mass, self.hbar)


@dataclass(frozen=True, eq=False)
class Mode:
    """Complex single-particle wave function sampled on a lattice, norm = n."""

    lattice: Lattice
    values: np.ndarray
    n: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.lattice.points,):
            raise GridError("mode values do not match the lattice size")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def norm(self) -> float:
        return float(self.lattice.integrate(self.density))


def make_gaussian_mode(spec: CloudSpec, sign: int, lattice: Lattice, check_norm: bool = True) -> Mode:
    """Freely expanded Gaussian centred at ``sign * spec.offset``.

    phi(x) = sqrt(N / (a_tau sqrt(pi))) exp(-(x - x0)^2 / (2 a a_tau)),
    principal branch of the square root, no global phase removed.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    a = spec.width
    a_tau = spec.complex_width
    x0 = sign * spec.offset
    x = lattice.x
    amp = np.sqrt(spec.n / (a_tau * math.sqrt(math.pi)))
    values = amp * np.exp(-((x - x0) ** 2) / (2.0 * a * a_tau))
    mode = Mode(lattice, values, int(spec.n))
    if check_norm:
        rel = abs(mode.norm - spec.n) / spec.n
        if rel > NORM_RTOL:
            raise GridError(
                f"lattice [{lattice.x_min}, {lattice.x_max}] truncates the cloud: "
                f"norm deviates by {rel:.3e} (relative)"
            )
    return mode


def mode_overlap(m1: Mode, m2: Mode) -> complex:
    """Trapezoid approximation of <m1|m2> = integral conj(phi1) phi2 dx."""
    if m1.lattice != m2.lattice:
        raise GridError("modes live on different lattices")
    return complex(m1.lattice.integrate(np.conj(m1.values) * m2.values))


@dataclass(frozen=True, eq=False)
class TwoCloudState:
    """Fock state |N1>|N2> of two (near-)orthogonal condensate modes."""

    mode1: Mode
    mode2: Mode
    orthogonality_tol: float = DEFAULT_ORTHOGONALITY_TOL
    overlap: complex = field(init=False)

    def __post_init__(self):
        if self.mode1.lattice != self.mode2.lattice:
            raise GridError("both modes must share one lattice")
        ov = mode_overlap(self.mode1, self.mode2)
        scaled = abs(ov) / math.sqrt(self.n1 * self.n2)
        if scaled > self.orthogonality_tol:
            raise StateError(
                f"modes are not orthogonal: |<phi1|phi2>|/sqrt(N1 N2) = {scaled:.3e} "
                f"exceeds tolerance {self.orthogonality_tol:g}"
            )
        object.__setattr__(self, "overlap", ov)

    @classmethod
    def from_specs(cls, spec1: CloudSpec, spec2: CloudSpec, lattice: Lattice, **kwargs) -> "TwoCloudState":
        """Cloud 1 at ``-offset``, cloud 2 at ``+offset``."""
        return cls(make_gaussian_mode(spec1, -1, lattice), make_gaussian_mode(spec2, +1, lattice), **kwargs)

    @property
    def lattice(self) -> Lattice:
        return self.mode1.lattice

    @property
    def n1(self) -> int:
        return self.mode1.n

    @property
    def n2(self) -> int:
        return self.mode2.n

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def nu1(self) -> float:
        return self.n1 / self.n

    @property
    def nu2(self) -> float:
        return self.n2 / self.n

    @property
    def overlap_scaled(self) -> float:
        return abs(self.overlap) / math.sqrt(self.n1 * self.n2)

    def swapped(self) -> "TwoCloudState":
        return TwoCloudState(self.mode2, self.mode1, self.orthogonality_tol)

    def with_numbers(self, n1: int, n2: int) -> "TwoCloudState":
        """Same mode shapes rescaled to new particle numbers."""
        m1 = Mode(self.lattice, self.mode1.values * math.sqrt(n1 / self.n1), n1)
        m2 = Mode(self.lattice, self.mode2.values * math.sqrt(n2 / self.n2), n2)
        return TwoCloudState(m1, m2, self.orthogonality_tol)


@dataclass(frozen=True, eq=False)
class DensityProfile:
    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.lattice.points,):
            raise GridError("density values do not match the lattice size")
        if np.any(values < 0):
            raise ValueError("density must be non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def total(self) -> float:
        return float(self.lattice.integrate(self.values))


def reduce_phase(theta):
    """Map phases onto [0, 2 pi)."""
    out = np.mod(theta, TWO_PI)
    # np.mod can round up to exactly 2 pi for tiny negative inputs
    return np.where(out >= TWO_PI, 0.0, out)


def rho_theta(state: TwoCloudState, theta: float) -> DensityProfile:
    """Density |e^{i theta} phi1 + phi2|^2 of the partial distribution at phase theta."""
    t = float(reduce_phase(theta))
    if t == 0.0:
        psi = state.mode1.values + state.mode2.values
    else:
        psi = complex(math.cos(t), math.sin(t)) * state.mode1.values + state.mode2.values
    return DensityProfile(state.lattice, psi.real**2 + psi.imag**2)


def incoherent_density(state: TwoCloudState) -> DensityProfile:
    """|phi1|^2 + |phi2|^2, the phase average of rho_theta."""
    return DensityProfile(state.lattice, state.mode1.density + state.mode2.density)


def fringe_wavevector(spec1: CloudSpec, spec2: CloudSpec) -> float:
    """Analytic fringe wavevector for two identical expanded Gaussians at -d and +d.

    k = 2 d (hbar tau / m a) / (a |a_tau|^2).
    """
    if (spec1.width, spec1.tau, spec1.mass, spec1.hbar) != (spec2.width, spec2.tau, spec2.mass, spec2.hbar):
        raise ValueError("analytic wavevector assumes identical expansion parameters")
    a = spec1.width
    a_tau = spec1.complex_width
    d = 0.5 * (spec1.offset + spec2.offset)
    return 2.0 * d * a_tau.imag / (a * abs(a_tau) ** 2)


def default_state(n1: int = 5000, n2: int = 5000, *, width: float = 1.0, offset: float = 3.0,
                  tau: float = 10.0, lattice: Lattice | None = None) -> TwoCloudState:
    """The reference scenario: a = 1, d = 3, tau = 10, hbar = m = 1 on [-40, 40]."""
    if lattice is None:
        lattice = Lattice(-40.0, 40.0, DEFAULT_POINTS)
    spec1 = CloudSpec(width=width, offset=offset, tau=tau, n=n1)
    spec2 = CloudSpec(width=width, offset=offset, tau=tau, n=n2)
    return TwoCloudState.from_specs(spec1, spec2, lattice)
