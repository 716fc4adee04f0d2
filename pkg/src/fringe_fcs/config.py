"""Flat ``key = value`` run configuration with dotted section prefixes.

Blank lines and ``#`` comments are ignored, unknown keys are errors, and
every key has a documented default, so an empty file is a valid config.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Callable

from .binning import BinGrid
from .exceptions import ConfigError, FringeFCSError
from .fcs import QuadratureSpec
from .physics import CloudSpec, Lattice, TwoCloudState
from .sampling import MODES, SamplerConfig


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _int(text: str) -> int:
    return int(text, 10)


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _optional_float(text: str) -> float | None:
    return None if text.lower() == "none" else _float(text)


def _int_list(text: str) -> tuple[int, ...]:
    items = tuple(_int(t.strip()) for t in text.split(",") if t.strip())
    if not items:
        raise ValueError("expected a comma separated list of integers")
    return items


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text
    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    doc: str


def _cloud_keys(prefix: str) -> dict[str, Key]:
    return {
        f"{prefix}.a": Key(_float, 1.0, "initial width a of the trap ground state"),
        f"{prefix}.d": Key(_float, 3.0, "distance of the trap centre from the origin"),
        f"{prefix}.tau": Key(_float, 10.0, "free expansion time"),
        f"{prefix}.n": Key(_int, 5000, "particle number of the cloud"),
        f"{prefix}.mass": Key(_float, 1.0, "particle mass"),
        f"{prefix}.hbar": Key(_float, 1.0, "reduced Planck constant"),
    }


KEYS: dict[str, Key] = {
    **_cloud_keys("cloud1"),
    **_cloud_keys("cloud2"),
    "grid.x_min": Key(_float, -40.0, "left end of the simulated domain"),
    "grid.x_max": Key(_float, 40.0, "right end of the simulated domain"),
    "grid.points": Key(_int, 4097, "lattice nodes (bins need edges on nodes)"),
    "bins.k": Key(_int, 64, "number of measurement bins covering the domain"),
    "state.orthogonality_tol": Key(_float, 1e-3, "largest accepted |<phi1|phi2>|/sqrt(N1 N2)"),
    "quadrature.rule": Key(_choice("periodic", "gauss-legendre"), "periodic", "phase quadrature rule"),
    "quadrature.theta_nodes": Key(_int, 0, "phase nodes per axis, 0 = automatic"),
    "quadrature.panel_nodes": Key(_int, 16, "Gauss-Legendre nodes per panel"),
    "quadrature.lambda_nodes": Key(_int, 0, "lambda lattice size for the oracle, 0 = automatic"),
    "sampler.mode": Key(_choice(*MODES), "theta-multinomial", "snapshot sampler"),
    "sampler.shots": Key(_int, 100, "number of shots"),
    "sampler.seed": Key(_int, 0, "unsigned 64-bit seed"),
    "sampler.workers": Key(_int, 1, "worker threads (capped by FRINGE_FCS_THREADS)"),
    "sampler.pin_theta": Key(_optional_float, None, "fix the hidden phase (diagnostic), none = uniform"),
    "sample.calibration": Key(_bool, False, "also write the hidden phases to hidden.csv"),
    "sample.images": Key(_bool, True, "write one P5 graymap per shot"),
    "sample.image_height": Key(_int, 8, "pixel rows of each graymap"),
    "exact.max_snapshots": Key(_int, 100000, "refuse to enumerate more count strings than this"),
    "exact.oracle_tol": Key(_float, 1e-5, "allowed disagreement between probability routes"),
    "estimate.method": Key(_choice("lstsq", "mle"), "lstsq", "phase estimator"),
    "estimate.hist_bins": Key(_int, 16, "circular histogram bins for p(theta)"),
    "fisher.theta_points": Key(_int, 64, "phases in the Fisher sweep"),
    "fisher.theta": Key(_float, 0.0, "phase at which the N sweep is evaluated"),
    "fisher.n_values": Key(_int_list, (100, 1000, 10000, 100000), "per-cloud particle numbers of the sweep"),
    "output.dir": Key(str, ".", "output directory (the --out option overrides it)"),
}


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=lambda: {k: spec.default for k, spec in KEYS.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **updates) -> "RunConfig":
        """Copy with some keys replaced; keys use ``__`` for the dot (``sampler__seed``)."""
        values = dict(self.values)
        for name, value in updates.items():
            key = name.replace("__", ".")
            if key not in KEYS:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = value
        cfg = RunConfig(values)
        cfg.validate()
        return cfg

    def cloud(self, which: int) -> CloudSpec:
        p = f"cloud{which}"
        return CloudSpec(width=self[f"{p}.a"], offset=self[f"{p}.d"], tau=self[f"{p}.tau"],
                         n=self[f"{p}.n"], mass=self[f"{p}.mass"], hbar=self[f"{p}.hbar"])

    def lattice(self) -> Lattice:
        return Lattice(self["grid.x_min"], self["grid.x_max"], self["grid.points"])

    def state(self) -> TwoCloudState:
        return TwoCloudState.from_specs(self.cloud(1), self.cloud(2), self.lattice(),
                                        orthogonality_tol=self["state.orthogonality_tol"])

    def bins(self, lattice: Lattice | None = None) -> BinGrid:
        return BinGrid.uniform(lattice or self.lattice(), self["bins.k"])

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(rule=self["quadrature.rule"],
                              theta_nodes=self["quadrature.theta_nodes"] or None,
                              panel_nodes=self["quadrature.panel_nodes"],
                              lambda_nodes=self["quadrature.lambda_nodes"] or None)

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(mode=self["sampler.mode"], shots=self["sampler.shots"],
                             seed=self["sampler.seed"], pin_theta=self["sampler.pin_theta"],
                             workers=self["sampler.workers"])

    def validate(self) -> None:
        """Build every nested object once so that its invariants are checked."""
        try:
            self.cloud(1)
            self.cloud(2)
            lattice = self.lattice()
            self.bins(lattice)
            self.quadrature()
            self.sampler()
        except FringeFCSError as exc:
            raise ConfigError(str(exc)) from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self["sample.image_height"] < 1:
            raise ConfigError("sample.image_height must be >= 1")
        if self["estimate.hist_bins"] < 2:
            raise ConfigError("estimate.hist_bins must be >= 2")
        if self["fisher.theta_points"] < 1:
            raise ConfigError("fisher.theta_points must be >= 1")
        if any(n < 1 for n in self["fisher.n_values"]):
            raise ConfigError("fisher.n_values must be positive")


def parse_config(text: str) -> RunConfig:
    values = {k: spec.default for k, spec in KEYS.items()}
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        seen.add(key)
        try:
            values[key] = KEYS[key].parse(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno) from None
    cfg = RunConfig(values)
    cfg.validate()
    return cfg


def serialize_config(config: RunConfig) -> str:
    """Canonical text: every key, sorted, one per line."""
    return "".join(f"{k} = {_format(config[k])}\n" for k in sorted(KEYS))


# keys that cannot change any output byte stay out of the digest
HASH_EXCLUDED = frozenset({"output.dir", "sampler.workers"})


def config_hash(config: RunConfig) -> str:
    text = "".join(line for line in serialize_config(config).splitlines(keepends=True)
                   if line.split(" = ", 1)[0] not in HASH_EXCLUDED)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def describe_keys() -> str:
    return "".join(f"{k} = {_format(spec.default)}  # {spec.doc}\n" for k, spec in sorted(KEYS.items()))
