"""Measurement mesh, coarse-graining, and the snapshot count string."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .exceptions import GridError
from .physics import DensityProfile, Lattice, TwoCloudState


@dataclass(frozen=True, eq=False)
class BinGrid:
    """K contiguous bins whose edges sit on lattice nodes and cover the whole lattice."""

    lattice: Lattice
    edge_index: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.edge_index)
        if idx.ndim != 1 or idx.size < 2:
            raise GridError("a bin grid needs at least two edges")
        if not np.issubdtype(idx.dtype, np.integer):
            raise GridError("edge indices must be integers")
        if np.any(np.diff(idx) <= 0):
            raise GridError("bin edges must be strictly increasing")
        if idx[0] != 0 or idx[-1] != self.lattice.points - 1:
            raise GridError("bins must cover the lattice from x_min to x_max")
        idx = idx.astype(np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "edge_index", idx)

    @classmethod
    def uniform(cls, lattice: Lattice, k: int) -> "BinGrid":
        """K bins of (as nearly as the lattice allows) equal width."""
        if k < 1 or k > lattice.points - 1:
            raise GridError(f"cannot cut {lattice.points - 1} lattice intervals into {k} bins")
        idx = np.rint(np.linspace(0, lattice.points - 1, k + 1)).astype(np.int64)
        return cls(lattice, idx)

    @classmethod
    def from_edges(cls, lattice: Lattice, edges: Sequence[float]) -> "BinGrid":
        return cls(lattice, np.array([lattice.index_of(e) for e in edges], dtype=np.int64))

    @property
    def k(self) -> int:
        return self.edge_index.size - 1

    @property
    def edges(self) -> np.ndarray:
        return self.lattice.x_min + self.edge_index * self.lattice.h

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def integrate(self, values) -> np.ndarray:
        """Per-bin trapezoid integrals; shared edge nodes are split between neighbours."""
        values = np.asarray(values)
        if values.shape[-1] != self.lattice.points:
            raise GridError("values do not live on this bin grid's lattice")
        running = cumulative_trapezoid(values, dx=self.lattice.h, axis=-1, initial=0)
        return np.diff(running[..., self.edge_index], axis=-1)

    def coarsen(self, merge_map: Sequence[int]) -> "BinGrid":
        groups = _check_merge_map(merge_map, self.k)
        keep = [0] + [i + 1 for i in range(self.k - 1) if groups[i] != groups[i + 1]] + [self.k]
        return BinGrid(self.lattice, self.edge_index[keep])


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Integer particle counts, one per bin."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("a snapshot is a non-empty 1D count string")
        if not np.all(np.equal(np.mod(c, 1), 0)) or np.any(c < 0):
            raise ValueError("counts must be non-negative integers")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def k(self) -> int:
        return self.counts.size

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, Snapshot) and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash(tuple(self.counts.tolist()))

    def __repr__(self):
        return f"Snapshot({self.counts.tolist()})"


@dataclass(frozen=True, eq=False)
class BinnedDensity:
    """Per-bin masses of a density, rho_k = integral over bin k."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True, eq=False)
class BinnedComponents:
    """Bin integrals of |phi1|^2, |phi2|^2 and phi1 conj(phi2).

    Everything phase dependent reduces to these three arrays: the partial
    density is rho_k(theta) = d1_k + d2_k + 2 Re(e^{i theta} cross_k).
    """

    d1: np.ndarray
    d2: np.ndarray
    cross: np.ndarray

    @classmethod
    def from_state(cls, state: TwoCloudState, bins: BinGrid) -> "BinnedComponents":
        if bins.lattice != state.lattice:
            raise GridError("bins and state use different lattices")
        p1, p2 = state.mode1.values, state.mode2.values
        return cls(
            bins.integrate(np.abs(p1) ** 2),
            bins.integrate(np.abs(p2) ** 2),
            bins.integrate(p1 * np.conj(p2)),
        )

    @property
    def incoherent(self) -> np.ndarray:
        return self.d1 + self.d2

    def rho(self, theta) -> np.ndarray:
        """Binned partial density; a vector of phases gives one row per phase."""
        theta = np.asarray(theta, dtype=float)
        phase = np.exp(1j * theta)[..., None]
        return self.incoherent + 2.0 * (phase * self.cross).real

    def drho(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        phase = np.exp(1j * theta)[..., None]
        return -2.0 * (phase * self.cross).imag


def bin_density(profile: DensityProfile, bins: BinGrid) -> BinnedDensity:
    if profile.lattice != bins.lattice:
        raise GridError("bin edges are not aligned with the profile lattice")
    return BinnedDensity(bins.integrate(profile.values))


def _check_merge_map(merge_map: Sequence[int], k: int) -> np.ndarray:
    groups = np.asarray(merge_map)
    if groups.shape != (k,):
        raise GridError(f"merge map must assign each of the {k} bins to a group")
    if groups[0] != 0 or np.any(np.diff(groups) < 0) or np.any(np.diff(groups) > 1):
        raise GridError("merge map must group contiguous bins, numbered 0, 1, ... in order")
    return groups


def coarsen(snapshot: Snapshot, merge_map: Sequence[int]) -> Snapshot:
    """Add up the counts of neighbouring bins: n'_j = sum of n_k over group j."""
    groups = _check_merge_map(merge_map, snapshot.k)
    return Snapshot(np.bincount(groups, weights=snapshot.counts, minlength=groups[-1] + 1).astype(np.int64))


def iter_snapshots(n: int, k: int) -> Iterator[Snapshot]:
    """All count strings of K non-negative integers summing to N (stars and bars)."""
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        cuts = (-1,) + bars + (n + k - 1,)
        yield Snapshot(np.array([cuts[i + 1] - cuts[i] - 1 for i in range(k)], dtype=np.int64))


def snapshot_matrix(n: int, k: int) -> np.ndarray:
    return np.array([s.counts for s in iter_snapshots(n, k)], dtype=np.int64).reshape(-1, k)
