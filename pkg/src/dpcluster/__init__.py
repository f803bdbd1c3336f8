"""Differentially private clustering for well-separated instances.

Core pieces: base DP mechanisms, private averaging on bounded domains,
k-tuple clustering (partition tester, noisy averages, noisy centers), and the
stable k-means and Gaussian-mixture pipelines built on top of them.
"""

from .averaging import (
    DomainBounds,
    Segment,
    bounding_segment_1d,
    interior_point_1d,
    private_average_1d,
    private_average_rd,
)
from .gmm import (
    GmmResult,
    MixtureBounds,
    MixtureEstimate,
    MixtureParams,
    gen_empirical_means,
    gmm_sample_bounds,
    mixture_param_error,
    naive_gaussian_learner,
    nearest_mean_labeler,
    private_k_gmm,
    sample_mixture,
)
from .kmeans import (
    KMeansConfig,
    gen_centers,
    is_phi_xi_separated,
    kmeans_cost,
    kmeans_plusplus,
    lloyd_step,
    opt_bruteforce,
    ostrovsky_closeness_check,
    private_k_means,
    verify_event_ec_gamma,
    xi_bound,
)
from .primitives import (
    NoiseMode,
    ParameterError,
    PrivacyBudget,
    RandomStream,
    choice_from_log_weights,
    exponential_choice,
    gaussian_noise_vec,
    gaussian_sigma_for,
    laplace_noise,
    laplace_noise_vec,
)
from .tuples import (
    BallSet,
    CentersResult,
    DatabaseTooSmallError,
    TestOutcome,
    TesterParams,
    TupleDatabase,
    alpha_bound,
    balls_from_tuple,
    compute_m,
    count_unpartitioned,
    is_far_balls,
    is_good_solution,
    min_tuples_for_privacy,
    partition_of,
    private_k_averages,
    private_k_noisy_centers,
    private_test_close_tuples,
    private_test_partition,
    tuple_partitioned_by,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
