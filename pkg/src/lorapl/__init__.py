"""Path-loss modeling and evaluation for LoRaWAN measurement campaigns."""
from ._accel import BACKEND
from .analysis import (
    evaluate_models,
    evaluate_table,
    coefficient_progression,
    distance_bias,
    gateway_reception_histogram,
    reception_summary,
    rmse,
    rmse_convergence,
    sf_feasibility,
)
from .errors import (
    DegenerateInput,
    EmptyInput,
    OutOfValidityRange,
    ProviderUnavailable,
    SchemaError,
    SizeExceedsPopulation,
    UnknownGateway,
    ValidationError,
    ZeroDistance,
)
from .fitting import Binning, FitResult, bin_by_distance, fit_ldpl, normal_fit, residual_ecdf
from .geo import GeoPoint, LinkGeometry, haversine_distance, link_geometry
from .models import (
    CityClass,
    DualSlopeParams,
    Environment,
    LdplParams,
    ModelKind,
    ModelSpec,
    load_catalog,
    path_loss,
    predict,
    sample_with_shadowing,
)
from .pipeline import (
    FilterConfig,
    FilterReport,
    Gateway,
    LinkBudget,
    Sample,
    apply_filters,
    link_table,
    measured_path_loss,
    parse_gateways,
    parse_samples,
    predicted_rpp,
    snap_to_street,
)

__version__ = "0.1.0"
