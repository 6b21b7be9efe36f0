"""Point-pattern synthesis and analysis against LAB density/correlation maps.

The library embeds point-pattern correlations into a perceptual 2D latent
space, encodes spatially-varying density and correlation as three-channel
LAB raster images, and synthesizes/analyzes point patterns against those
images with an edge-aware pair-correlation estimator and gradient-based
optimization.

Importing this package pins BLAS thread pools to a single thread (if numpy
has not been imported yet) so that results are byte-identical regardless of
the machine and of the --threads worker count; parallelism is applied only
across independent seeded tasks.
"""

import os as _os

# Must happen before numpy initializes its BLAS backend.
for _var in (
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "OMP_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
):
    _os.environ.setdefault(_var, "1")

from .backend import BACKEND  # noqa: E402
from .types import (  # noqa: E402
    FeatureImage,
    GuidanceField,
    PcfConfig,
    PointPattern,
    ScalarField,
    SynthesisConfig,
)
from .spectrum import GmmSpectrumParams, evaluate_gmm_spectrum, radial_power_spectrum, sample_spectrum  # noqa: E402
from .realize import generate_basis, realize  # noqa: E402
from .pcf import (  # noqa: E402
    build_normalization,
    estimate_pcf,
    guidance_weight,
    kernel,
    r_max,
    radius_grid,
    spatial_weight,
)
from .features import (  # noqa: E402
    FEATURE_LENGTH,
    FilterBank,
    dissimilarity_matrix,
    feature_stats,
    perceptual_distance,
    splat,
)
from .embedding import (  # noqa: E402
    Palette,
    align_and_normalize,
    best_learning_rate,
    build_lut,
    build_palette,
    decode,
    encode,
    load_palette,
    locality,
    mds_embed,
    save_palette,
)
from .synthesis import (  # noqa: E402
    analytic_gradient,
    init_points,
    objective,
    optimize_dot_sizes,
    point_count,
    realizability_metric,
    synthesize,
)
from .mapest import estimate_correlation_map, estimate_density, estimate_feature_image  # noqa: E402
from .raster import (  # noqa: E402
    lab_to_rgb,
    load_feature_image,
    load_points_csv,
    render,
    rgb_to_lab,
    save_feature_image,
    save_points_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "FeatureImage",
    "GuidanceField",
    "PcfConfig",
    "PointPattern",
    "ScalarField",
    "SynthesisConfig",
    "GmmSpectrumParams",
    "evaluate_gmm_spectrum",
    "radial_power_spectrum",
    "sample_spectrum",
    "generate_basis",
    "realize",
    "FEATURE_LENGTH",
    "FilterBank",
    "dissimilarity_matrix",
    "feature_stats",
    "perceptual_distance",
    "splat",
    "build_normalization",
    "estimate_pcf",
    "guidance_weight",
    "kernel",
    "r_max",
    "radius_grid",
    "spatial_weight",
    "Palette",
    "align_and_normalize",
    "best_learning_rate",
    "build_lut",
    "build_palette",
    "decode",
    "encode",
    "load_palette",
    "locality",
    "mds_embed",
    "save_palette",
    "analytic_gradient",
    "init_points",
    "objective",
    "optimize_dot_sizes",
    "point_count",
    "realizability_metric",
    "synthesize",
    "estimate_correlation_map",
    "estimate_density",
    "estimate_feature_image",
    "lab_to_rgb",
    "load_feature_image",
    "load_points_csv",
    "render",
    "rgb_to_lab",
    "save_feature_image",
    "save_points_csv",
    "__version__",
]
