"""Discrete spectrum of a planar Dirichlet strip with two distant localized
perturbations: banded eigensolvers, far-field amplitude extraction, the
cross-well interaction matrix and the exponential splitting laws."""

from ._kernels import IMPL as KERNEL_IMPL
from .config import RunConfig, load_config, parse_config
from .coupling import (
    AsymptoticPrediction,
    CouplingMatrix,
    apply_T6,
    apply_T7,
    build_phi_vectors,
    coupling_matrix,
    eigvec_coeffs,
    make_coupling_side,
    predict_one_sided,
    predict_thm_matrix,
    predict_two_sided,
    synthesize_eigenfunction,
    tau_roots,
)
from .eigensolve import (
    BandedFactorization,
    SpectralResult,
    banded_factorize,
    deflated_solve,
    dense_eig_oracle,
    lowest_eigenpairs,
    resolvent_solve,
)
from .harness import (
    LadderReport,
    Verdict,
    convergence_study,
    fit_exponential,
    run_ladder,
    tune_depth,
    verify,
)
from .modes import (
    DecayProfile,
    LimitingSpectrum,
    effective_rate,
    extract_beta,
    extract_beta_tilde,
    limiting_spectrum,
    mode_project,
    rotate_eigenbasis,
)
from .stripgrid import (
    DiscreteOperator,
    PerturbationSpec,
    StripGrid,
    assemble_double,
    assemble_laplacian,
    assemble_limiting,
    assemble_perturbation,
    check_form_bound,
    delta_line,
    divergence_iso,
    gaussian_well,
    integral_rank1,
    square_well,
    zero_spec,
)
from .transverse import DecayRate, TransverseMode, decay_rate, transverse_modes, transverse_modes_fd

__version__ = "0.1.0"
