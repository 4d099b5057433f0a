"""Low-rank Mahalanobis metric learning from Bradley-Terry triplet
comparisons, with individual-fairness audits.

Typical use::

    K_star, A_star = gen_metric(p, r, seed)
    batch = sample_responses(X, A_star, sample_triplets(n, s, seed), seed)
    A0, report = spectral_init(batch, X, r)
    A_hat, trace = train(batch, X, A0)
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    TripletMetricError,
    ConfigurationError,
    InvalidInputError,
    ParseError,
    InsufficientDataError,
    NumericalError,
    ConnectivityError,
    ConvergenceError,
    RankDeficiencyError,
    InitializationError,
    DivergenceError,
)
from .core import (  # noqa: E402
    AlignmentResult,
    aligned_error,
    comparison_matrix,
    mahalanobis_sq,
    metric_gap,
    procrustes_align,
    squared_distance_matrix,
    triplet_margin,
    triplet_margins,
)
from .simulate import (  # noqa: E402
    FeatureDistribution,
    TripletBatch,
    gen_features,
    gen_metric,
    sample_responses,
    sample_triplets,
    stage_rng,
)
from .spectral import (  # noqa: E402
    InitReport,
    SpectralOptions,
    assemble_log_matrix,
    build_tournament,
    double_center,
    filter_by_norm,
    generalized_eig_init,
    rank_centrality,
    spectral_init,
)
from .descent import (  # noqa: E402
    TrainConfig,
    TrainTrace,
    gradient,
    hessian_quadratic_form,
    loss,
    loss_and_gradient,
    train,
)
from .fairness import (  # noqa: E402
    AuditReport,
    CertificationRecord,
    PredictionSet,
    audit,
    certify_transfer,
    isometric_predictor,
    smallest_nonzero_eigenvalue,
    transfer_bound,
)
from .io import ingest_csv, read_matrix_csv, read_triplets_csv, write_matrix_csv, write_triplets_csv  # noqa: E402
from .preprocess import pca_project, pca_standardize  # noqa: E402
from .pipeline import RunConfig, run_pipeline  # noqa: E402
