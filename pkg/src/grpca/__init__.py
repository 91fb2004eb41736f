"""Graph-regularized PCA: models, precision learning, synthetic benchmark."""

__version__ = "0.1.0"

from .graphs import (  # noqa: F401
    BarabasiAlbert,
    ErdosRenyi,
    FeatureGraph,
    WattsStrogatz,
    adjacency_from_precision,
    density_to_params,
    generate,
    laplacian_quadratic,
)
from .datagen import (  # noqa: F401
    GeneratorConfig,
    SyntheticBundle,
    generate_bundle,
    load_bundle,
    save_bundle,
)
from .models import (  # noqa: F401
    FactorModel,
    GrpcaConfig,
    fit_grpca,
    fit_pca,
    fit_sparse_pca,
    objective,
    reconstruct,
    transform,
)
from .metrics import (  # noqa: F401
    MetricsReport,
    alignment,
    projector,
    r2_global,
    selectivity,
    solve_assignment,
)
from .precision import (  # noqa: F401
    PrecisionEstimate,
    empirical_covariance,
    glasso,
    glasso_cv,
    oracle_precision,
)
from .numerics import RandomSource  # noqa: F401
