from app.schemas.common import (
    AnalysisMode,
    BellKind,
    Bound,
    ConfigurationTag,
    Detection,
    Estimate,
    TableKind,
    Variant,
)
from app.schemas.correlations import (
    AnalysisReport,
    BellIdentification,
    BellParameters,
    BoundCheck,
    ChshVerdict,
    CorrelationSet,
    EntanglementVerdict,
    FidelityBounds,
)
from app.schemas.countsim import CalibrationRecord, CountsRecord, ExperimentConfig, GeneratedStream, TimestampStream
from app.schemas.manifest import RunManifest
from app.schemas.optics import (
    CHANNEL_KEYS,
    DETECTOR_NAMES,
    CoincidenceTable,
    InterferometerConfig,
    MarginalCoherences,
    ModeState,
)
from app.schemas.states import AntidiagonalEstimate, AntidiagonalSummary, PolarizationState
from app.schemas.sweep import SWEEP_COLUMNS, SweepFamily, SweepPoint
