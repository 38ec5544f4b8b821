"""Primal-dual fixed point solvers with dynamic stepsizes for min f1(Dx) + f2(x)."""

from .linops import (
    LinearOp,
    PowerIterationError,
    SparseMatrix,
    diff_op_2d,
    gaussian_blur_op,
    identity_op,
    matrix_op,
    op_norm_sq,
)
from .prox import (
    ProxFn,
    QuadraticFn,
    SmoothFn,
    conjugate_prox,
    group_l2_norm_fn,
    group_l2_prox,
    l1_norm_fn,
    l1_prox,
    quadratic_fn,
    resolvent_identity_check,
    subgradient_prox_check,
    zero_prox_fn,
)
from .solvers import (
    PDState,
    Problem,
    RunTrace,
    Schedule,
    SIUState,
    StoppingRule,
    UnsupportedProblemError,
    apply_T,
    apply_Tn,
    chambolle_pock,
    ds_split_x_update,
    ifp2o,
    make_problem,
    mann_combine,
    pdfp2o,
    pdfp2o_ds,
    pdfp2o_dsn,
    pdfp2o_kappa,
    pfbs_fp2o,
    saddle_step,
    siu,
    siu_x_update,
)
from .schedules import (
    ScheduleSpec,
    bb_dynamic_schedule,
    bb_gamma_raw,
    constant_schedule,
    convergent_perturbation_schedule,
)
from .diagnostics import (
    InvariantViolationError,
    RateCertificate,
    fejer_check,
    fixed_point_residual,
    lambda_norm,
    m_seminorm,
    optimality_residual,
    rate_certificate,
    rel_err,
    snr,
    write_trace_csv,
)
from .tomo import (
    TomoGeometry,
    TomoProblem,
    build_projection_matrix,
    make_denoise_problem,
    make_deblur_problem,
    make_lasso_problem,
    make_tomo_problem,
    make_tv_problem,
    paper_ct_geometry,
    read_pgm,
    shepp_logan,
    write_pgm,
)

__version__ = "0.1.0"
