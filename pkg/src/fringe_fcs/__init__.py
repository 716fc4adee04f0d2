"""Counting statistics of snapshot images of two interfering Bose condensates."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .binning import (BinGrid, BinnedComponents, BinnedDensity, Snapshot, bin_density, coarsen,
                      iter_snapshots, snapshot_matrix)
from .config import RunConfig, config_hash, parse_config, serialize_config
from .estimation import (Calibration, PhaseEstimate, PhaseEstimator, PhaseHistogram, asymptotic_sigma,
                         calibrate, fisher_information, fisher_information_wavefunction, fisher_sigma,
                         fit_phase, p_theta_distribution, partial_entropy)
from .exceptions import (ConfigError, DegenerateObjectiveError, DomainError, FringeFCSError, GridError,
                         QuadratureError, RejectionLimitError, StateError, ZeroInformationError)
from .fcs import (OverlapKernel, QuadratureSpec, brute_force_probability, correlator, exact_probabilities,
                  exact_probability, generating_function, lambda_lattice_probability, partial_probability)
from .physics import (CloudSpec, DensityProfile, Lattice, Mode, TwoCloudState, default_state,
                      make_gaussian_mode, mode_overlap, rho_theta)
from .sampling import SamplerConfig, ShotRecord, empirical_mean_profile, sample_batch, sample_shot
