import math
from typing import Any, Optional

from pydantic import root_validator, validator

from app.schemas.common import AnalysisMode, Base, BellKind, Bound, ConfigurationTag, Detection, Estimate, Variant
from app.schemas.states import AntidiagonalEstimate

TSIRELSON_BOUND = 2 * math.sqrt(2)


class CorrelationSet(Base):
    """
    Polarization dependent correlation coefficients of one measurement configuration.

    Attributes:
        E_HH, E_VV, E_HV, E_VH: coefficients with standard deviations (zero for exact probabilities)
        configuration: standard or CHSH phase setting the coefficients were taken in
        variant: interferometer flavour, it fixes the sign of orthogonal terms
    """

    E_HH: Estimate
    E_VV: Estimate
    E_HV: Estimate
    E_VH: Estimate
    configuration: ConfigurationTag
    variant: Variant = Variant.SAGNAC

    @validator('E_HH', 'E_VV', 'E_HV', 'E_VH')  # type: ignore
    def validate_coefficient(cls, v: Estimate) -> Estimate:
        slack = 3 * v.sigma + 1e-9
        if abs(v.value) > 1 + slack:
            raise ValueError(f'correlation coefficient {v.value} outside [-1, 1] beyond 3 sigma')
        return v


class EntanglementVerdict(Base):
    """
    Outcome of the separable-bound test |f+f*| > 1/2 or |d+d*| > 1/2.

    Attributes:
        f_plus_est, d_plus_est: the tested estimates
        entangled: Detected, NotDetected or Inconclusive
        z_score: largest finite excess over the bound in units of sigma; None for exact inputs
        which_bound: bound that fired, None when nothing was detected
        significance: threshold the z score was compared against
    """

    f_plus_est: Estimate
    d_plus_est: Estimate
    entangled: Detection
    z_score: Optional[float] = None
    which_bound: Bound = Bound.NONE
    significance: float

    @root_validator(skip_on_failure=True)  # type: ignore
    def validate_detection(cls, values: dict[str, Any]) -> dict[str, Any]:
        z_score = values.get('z_score')
        if values['entangled'] == Detection.DETECTED and z_score is not None and z_score < values['significance']:
            raise ValueError('Detected verdict requires z_score above the significance threshold')
        return values


class BellIdentification(Base):
    """
    Nearest of the eight Bell signatures to a measured anti-diagonal point.

    Attributes:
        best: winning Bell state, None when its coordinate does not clear 1/2 at the significance
        nearest: nearest signature regardless of the gate
        distance: Euclidean distance to the nearest signature
        estimates: the four coordinates with sigmas
    """

    best: Optional[BellKind] = None
    nearest: BellKind
    distance: float
    estimates: AntidiagonalEstimate


class FidelityBounds(Base):
    """
    Lower bounds on the overlap with each unshifted Bell state.
    """

    psi_plus: float
    psi_minus: float
    phi_plus: float
    phi_minus: float

    @validator('psi_plus', 'psi_minus', 'phi_plus', 'phi_minus')  # type: ignore
    def validate_range(cls, v: float) -> float:
        if not -1e-12 <= v <= 1 + 1e-9:
            raise ValueError(f'fidelity bound {v} outside [0, 1]')
        return min(max(v, 0.0), 1.0)

    def above_half(self) -> list[str]:
        return [name for name, value in self.dict().items() if value > 0.5]


class BellParameters(Base):
    """
    The two CHSH parameters of the CHSH configuration, 2*sqrt(2)(f+f*) and 2*sqrt(2)(d+d*).
    """

    S_psi: Estimate
    S_phi: Estimate

    @validator('S_psi', 'S_phi')  # type: ignore
    def validate_tsirelson(cls, v: Estimate) -> Estimate:
        if abs(v.value) > TSIRELSON_BOUND + 3 * v.sigma + 1e-9:
            raise ValueError(f'Bell parameter {v.value} beyond the Tsirelson bound')
        return v


class BoundCheck(Base):
    """
    One |S| threshold evaluated for one Bell parameter.
    """

    exceeded: bool
    z_score: Optional[float] = None


class ChshVerdict(Base):
    """
    Local (|S| > 2) and separable (|S| > sqrt(2)) bound checks for both Bell parameters.
    """

    significance: float
    psi_local: BoundCheck
    phi_local: BoundCheck
    psi_separable: BoundCheck
    phi_separable: BoundCheck

    @property
    def violates_local_bound(self) -> dict[str, bool]:
        return {'S_psi': self.psi_local.exceeded, 'S_phi': self.phi_local.exceeded}

    @property
    def exceeds_separable_bound(self) -> dict[str, bool]:
        return {'S_psi': self.psi_separable.exceeded, 'S_phi': self.phi_separable.exceeded}


class AnalysisReport(Base):
    """
    Everything one analysis run produced. Standard mode fills antidiagonals, verdict, identification and
    fidelity; CHSH mode fills bell_parameters and chsh.
    """

    mode: AnalysisMode
    correlations: CorrelationSet
    antidiagonals: Optional[AntidiagonalEstimate] = None
    verdict: Optional[EntanglementVerdict] = None
    identification: Optional[BellIdentification] = None
    fidelity: Optional[FidelityBounds] = None
    bell_parameters: Optional[BellParameters] = None
    chsh: Optional[ChshVerdict] = None
    normalized: bool = False
    accidental_corrected: bool = False
