"""fpcok: cokernels of sparse random matrices over F_p.

Linear algebra over F_p, balanced entry laws and samplers, closed-form
corank laws, exact Fourier moment sums, and Monte Carlo experiments.
"""

from .errors import FpcokError, InfeasibleSize, InvalidProfile, NoFeasibleGamma, ThresholdOutOfRange
from .experiments import (
    CorankHistogram,
    ExperimentConfig,
    MomentEstimate,
    moment_estimate,
    run_corank,
    simulate,
    threshold_sweep,
    tv_distance,
    two_point_ensemble,
)
from .fourier import (
    FourierParams,
    PartialSumReport,
    TupleProfile,
    brute_force_expected_sur,
    c_norm,
    classify_c3_subcase,
    classify_case,
    conditioned_sum,
    decomposition_audit,
    gamma_defaults,
    lemma22_audit,
    moment_fourier,
    partial_sum,
)
from .gfp import FpMatrix, batch_rank, corank, rank, rref
from .limits import (
    CorankLaw,
    exact_uniform_corank_prob,
    expected_sur_uniform,
    limiting_corank_prob,
    limiting_law,
    num_surjections,
    zero_line_probability,
)
from .samplers import EntryDistribution, MatrixEnsemble, TwoPointEntry, TwoPointGrid, alpha_n, sample_matrix

__version__ = "0.1.0"
