"""Multinomial approximate filtering, smoothing and inference for stochastic compartmental models."""

from .core import (
    TOL, AllWeightsZero, ConfigError, CountExceedsPopulation, DegenerateUpdate, EpiError,
    HorizonCapReached, ModelSpec, NegativeElement, ObservationExceedsPopulation,
    SumOutOfTolerance, TooLarge, ZeroDenominator, ZeroExpectedCount,
    validate_counts, validate_joint_matrix, validate_prob_vector,
)
from .models import KERNELS, covid_kernel, ebola_kernel, get_kernel, make_spec, seeded_pi0, seir_kernel
from .simulate import (
    LatentTrajectory, make_rng, simulate_latent, simulate_obs_x, simulate_obs_z,
    simulate_until_extinction,
)
from .filtering import (
    ObsX, ObsZ, filter_x, filter_z, filtered_mean_and_ci, predict_x, predict_z, update_x, update_z,
)
from .smoothing import backward_kernel_z, smooth_x, smooth_z, smoothed_transition_mean

__version__ = "0.1.0"
