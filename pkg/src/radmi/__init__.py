"""Single-pass segmentation uncertainty maps from inter-layer decoder
mutual information, plus baseline uncertainty measures and an
agreement-metric suite for comparing the resulting maps."""

__version__ = "0.1.0"

from .exceptions import (
    DegenerateInputError,
    FormatError,
    InvalidPatchError,
    RadmiError,
    ShapeMismatchError,
    SingularCovarianceError,
)
from .dataio import (
    SectionDataset,
    list_sections,
    load_dataset,
    load_section,
    read_tensor,
    save_section,
    write_tensor,
)
from .mi import (
    CovarianceEstimate,
    MIConfig,
    MIMap,
    empirical_covariance,
    gaussian_mi,
    regularize,
    windowed_mi_map,
)
from .pipeline import (
    AggregationConfig,
    UncertaintyMap,
    aggregate,
    aggregate_mi_maps,
    align_bilinear,
    minmax_normalize,
    radmi,
    resolution_weights,
    upsample_bicubic,
)
from .baselines import (
    PredictionStack,
    ProbabilityStack,
    ensemble_entropy,
    one_minus_msp,
    prediction_switches,
    softmax_entropy,
)
from .metrics import (
    MetricConfig,
    MetricReport,
    aggregate_sections,
    compute_all,
)
from .synthetic import (
    SyntheticSpec,
    gen_boundary_scene,
    gen_correlated_field,
    generate_miniature_dataset,
)

__all__ = [
    "AggregationConfig",
    "CovarianceEstimate",
    "DegenerateInputError",
    "FormatError",
    "InvalidPatchError",
    "MIConfig",
    "MIMap",
    "MetricConfig",
    "MetricReport",
    "PredictionStack",
    "ProbabilityStack",
    "RadmiError",
    "SectionDataset",
    "ShapeMismatchError",
    "SingularCovarianceError",
    "SyntheticSpec",
    "UncertaintyMap",
    "aggregate",
    "aggregate_mi_maps",
    "aggregate_sections",
    "align_bilinear",
    "compute_all",
    "empirical_covariance",
    "ensemble_entropy",
    "gaussian_mi",
    "gen_boundary_scene",
    "gen_correlated_field",
    "generate_miniature_dataset",
    "list_sections",
    "load_dataset",
    "load_section",
    "minmax_normalize",
    "one_minus_msp",
    "prediction_switches",
    "radmi",
    "read_tensor",
    "regularize",
    "resolution_weights",
    "save_section",
    "softmax_entropy",
    "upsample_bicubic",
    "windowed_mi_map",
    "write_tensor",
]
