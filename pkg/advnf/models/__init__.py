from advnf.models.synthetic import (
    MOGComponent, MOGParams, RingComponent, RingsParams, SyntheticCondition,
)
from advnf.models.lattice import LatticeCondition, SpinConfig, wrap_angles
from advnf.models.sampling import IMHResult, MHConfig
from advnf.models.training import (
    LossWeights, Phase1Config, Phase2Config, TraceRow, TrainConfig, TRACE_COLUMNS,
)
from advnf.models.metrics import (
    ConditionMetrics, Histogram, MetricsReport, REPORT_COLUMNS, SUMMARY_FIELDS,
)
from advnf.models.flow import DiscriminatorSpec, FlowSpec
from advnf.models.experiment import (
    DatasetSpec, EnsembleSizes, EvaluationSpec, ExperimentConfig, ModelSpec,
    LATTICE_KINDS, SYNTHETIC_KINDS,
)

__all__ = [
    "MOGComponent", "MOGParams", "RingComponent", "RingsParams", "SyntheticCondition",
    "LatticeCondition", "SpinConfig", "wrap_angles",
    "IMHResult", "MHConfig",
    "LossWeights", "Phase1Config", "Phase2Config", "TraceRow", "TrainConfig", "TRACE_COLUMNS",
    "ConditionMetrics", "Histogram", "MetricsReport", "REPORT_COLUMNS", "SUMMARY_FIELDS",
    "DiscriminatorSpec", "FlowSpec",
    "DatasetSpec", "EnsembleSizes", "EvaluationSpec", "ExperimentConfig", "ModelSpec",
    "LATTICE_KINDS", "SYNTHETIC_KINDS",
]
