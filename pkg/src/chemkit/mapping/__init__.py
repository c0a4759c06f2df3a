"""Utility-mapping model construction, evaluation and cataloguing."""

from .catalogue import PERFORMANCE_COLUMNS, ModelCatalogue, build_catalogue, load_catalogue, performance_csv
from .evaluate import (
    CandidateSpec,
    Metrics,
    PerformanceRecord,
    build_terms,
    cluster_fold_assignment,
    complete_rows,
    compute_metrics,
    correlation_matrix,
    cross_validate,
    design_from_terms,
    fit_candidate,
    fold_assignment,
    select_models,
    specify_candidates,
)
from .fit import (
    DEFAULT_EPSILON,
    ConvergenceWarning,
    check_full_rank,
    fit_family,
    fit_glm_irls,
    fit_lmm_random_intercept,
    fit_ols,
    fit_transformed_ols,
    glm_loglik,
    glm_score,
    lmm_gls_beta,
    lmm_loglik,
)
from .models import FAMILY_KINDS, INTERCEPT, FittedModel, ModelFamily, Term, forward_transform, inverse_transform

__all__ = [name for name in dir() if not name.startswith("_")]
