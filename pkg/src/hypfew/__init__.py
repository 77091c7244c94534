"""Hyperbolic and fixed-radius embeddings for prototypical few-shot learning.

Submodules: :mod:`geometry` (Poincaré ball, hyperboloid, fixed-radius
distances), :mod:`concentration` (volume/area of hyperbolic balls),
:mod:`protoloss` (prototypical loss, centroids and analytic gradients),
:mod:`harness` (synthetic tasks, training, evaluation) and :mod:`cli`.
"""

from .concentration import (
    BallSpec,
    ConcentrationRow,
    ball_volume,
    concentration_sweep,
    log_ball_volume,
    sphere_area,
    volume_area_ratio,
)
from .config import RunConfig, load_comparison, load_config
from .errors import (
    ConfigError,
    CurvatureMismatchError,
    DimensionError,
    DomainError,
    HypFewError,
    NumericError,
    QuadratureError,
    SingularGradientError,
    TangencyError,
    TrainingError,
)
from .geometry import (
    CurvatureSpace,
    HyperboloidPoint,
    PoincarePoint,
    SpaceKind,
    TangentVector,
    clipped_radius,
    effective_radius,
    fixed_radius_hyperbolic_distance,
    hyperboloid_distance,
    hyperboloid_exp,
    inverse_stereographic,
    mobius_add,
    poincare_distance,
    poincare_exp0,
    stereographic,
)
from .harness import (
    Episode,
    EncoderParams,
    HierarchySpec,
    RunReport,
    encode,
    evaluate,
    generate_hierarchy,
    run,
    sample_episode,
    saturation_metric,
    train,
)
from .protoloss import (
    ClipConfig,
    GradientMode,
    PrototypeSet,
    einstein_midpoint,
    loss_and_gradients,
    prototypical_loss,
)

__version__ = "0.1.0"
