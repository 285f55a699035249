"""Perturbation-based out-of-sample extension of kernel eigendecompositions."""

from .extension import (
    ExtensionConfig,
    ExtensionResult,
    KernelDifference,
    Selector,
    block_extend,
    extend_with_submatrix,
    extension_error_bound,
    kernel_approx,
    nnz_fraction,
    pert_extend,
    pert_extend_values,
    select_submatrix,
)
from .kernels import (
    Dataset,
    KernelSpec,
    build_kernel,
    gen_band_matrix,
    gen_clustered_dataset,
    gen_psd_separated_block,
    gen_rank_m_spectrum,
    gen_slow_decay,
    gen_unit_random_symmetric,
    gen_wishart_psd,
    load_dataset,
    sparsify,
    standardize,
)
from .matrixcore import (
    ConvergenceError,
    EigengapError,
    EigenPairs,
    RankDeficientError,
    SparseSymmetric,
    SymmetricDense,
    add_scaled,
    canonical_signs,
    frobenius_norm,
    matvec,
    nnz,
    principal_angle,
    read_dense,
    read_sparse,
    spectral_norm,
    sym_eig_full,
    sym_eig_partial,
    trace,
    write_dense,
    write_sparse,
)
from .nystrom import (
    EnsembleSpec,
    NystromConfig,
    SingularSampleError,
    apply_config,
    check_shifted_equivalence,
    check_topleft_equivalence,
    ensemble_nystrom,
    generalized_nystrom,
    nystrom_extend,
    nystrom_kernel_approx,
    permute_symmetric,
    shift_mu_mean,
    shifted_nystrom,
)
from .perturbation import (
    MuCollisionError,
    MuPolicy,
    PerturbationProblem,
    classical_eigval_update,
    classical_eigvec_update,
    error_bound_first,
    error_bound_second,
    first_order_bounds,
    is_lowrank_plus_shift,
    mu_mean,
    residual_r,
    second_order_bounds,
    truncated_first_order,
    truncated_second_order,
)

__version__ = "0.1.0"
