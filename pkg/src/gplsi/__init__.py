"""Graph-regularized topic modeling.

Estimates document-topic mixtures and topic-word distributions from a
document-term matrix and a document similarity graph, by an iterative
graph-aligned SVD with total-variation smoothing, simplex vertex
hunting, and constrained least squares.
"""

from ._version import __version__
from .corpus import (
    CountMatrix,
    FrequencyMatrix,
    GroundTruth,
    generate_synthetic,
    load_counts,
    load_graph,
    load_model,
    save_model,
    validate_frequency,
)
from .decomposition import (
    FitConfig,
    FitTrace,
    SvdFactors,
    cross_validate_rho,
    default_rho_grid,
    default_t_max,
    fit_gplsi,
    fit_onestep,
    fit_plsi,
    initialize_V,
)
from .errors import (
    DegenerateGeometry,
    DimensionMismatch,
    GplsiError,
    InvalidParameter,
    MaxIterationsExceeded,
    NotOrthonormal,
    NumericalFailure,
    ParseError,
    RankDeficientWarning,
    SingularH,
    TooLarge,
    ZeroLengthDocument,
    ZeroVariance,
)
from .eval import (
    EvalReport,
    align_columns,
    dominant_topics,
    evaluate,
    mixture_errors,
    morans_I,
    pas,
    sin_theta,
    topic_errors,
)
from .graph import (
    DocumentGraph,
    FoldPartition,
    IncidenceMatrix,
    connected_components,
    incidence,
    inverse_scaling_factor,
    lambda_max_gamma,
    minimum_spanning_tree,
    mst_folds,
)
from .model import TopicModel, fit_pipeline
from .simplex import (
    MixtureEstimate,
    TopicEstimate,
    VertexSet,
    project_simplex_rows,
    recover_A,
    recover_W,
    spa,
)
from .tv_denoise import (
    TvProblem,
    TvSolution,
    TvSolverCache,
    group_soft_threshold,
    solve_tv,
    theoretical_rho,
)

__all__ = [
    "__version__",
    "CountMatrix", "FrequencyMatrix", "GroundTruth", "generate_synthetic",
    "load_counts", "load_graph", "load_model", "save_model",
    "validate_frequency",
    "FitConfig", "FitTrace", "SvdFactors", "cross_validate_rho",
    "default_rho_grid", "default_t_max", "fit_gplsi", "fit_onestep",
    "fit_plsi", "initialize_V",
    "DegenerateGeometry", "DimensionMismatch", "GplsiError",
    "InvalidParameter", "MaxIterationsExceeded", "NotOrthonormal",
    "NumericalFailure", "ParseError", "RankDeficientWarning", "SingularH",
    "TooLarge", "ZeroLengthDocument", "ZeroVariance",
    "EvalReport", "align_columns", "dominant_topics", "evaluate",
    "mixture_errors", "morans_I", "pas", "sin_theta", "topic_errors",
    "DocumentGraph", "FoldPartition", "IncidenceMatrix",
    "connected_components", "incidence", "inverse_scaling_factor",
    "lambda_max_gamma", "minimum_spanning_tree", "mst_folds",
    "TopicModel", "fit_pipeline",
    "MixtureEstimate", "TopicEstimate", "VertexSet", "project_simplex_rows",
    "recover_A", "recover_W", "spa",
    "TvProblem", "TvSolution", "TvSolverCache", "group_soft_threshold",
    "solve_tv", "theoretical_rho",
]
