import math
from typing import Optional, Sequence, Union

import numpy as np
from loguru import logger

from app.core.config import settings
from app.schemas import (
    AnalysisMode,
    AnalysisReport,
    AntidiagonalEstimate,
    AntidiagonalSummary,
    BellIdentification,
    BellKind,
    BellParameters,
    Bound,
    BoundCheck,
    ChshVerdict,
    CoincidenceTable,
    ConfigurationTag,
    CorrelationSet,
    Detection,
    EntanglementVerdict,
    Estimate,
    FidelityBounds,
    PolarizationState,
    TableKind,
    Variant,
)
from app.schemas.common import optional_float
from app.services.utils.custom_exceptions import ConfigurationError, RangeError, ZeroDenominator

SEPARABLE_BOUND = 0.5
LOCAL_CHSH_BOUND = 2.0
SEPARABLE_CHSH_BOUND = math.sqrt(2)
# an empty count channel is given the Poisson variance of a single count
EMPTY_CHANNEL_VARIANCE = 1.0

# port-parity weights of the quadruple (y, z) = (0, 0), (0, 1), (1, 0), (1, 1)
PARITY_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])
POLARIZATION_PAIRS = {'E_HH': (0, 0), 'E_VV': (1, 1), 'E_HV': (0, 1), 'E_VH': (1, 0)}

Summary = Union[AntidiagonalSummary, AntidiagonalEstimate]


def _z_score(value: float, sigma: float, bound: float) -> float:
    """
    Excess of |value| over the bound in units of sigma; exact inputs give +-inf under a strict comparison.
    """
    excess = abs(value) - bound
    if sigma > 0:
        return excess / sigma
    return math.inf if excess > 0 else -math.inf


def _quadruple_indices(j: int, s: int) -> np.ndarray:
    """
    Flat channel indices of (jA0 sB0), (jA0 sB1), (jA1 sB0), (jA1 sB1).
    """
    return np.array([4 * (2 * y + j) + (2 * z + s) for y in (0, 1) for z in (0, 1)])


class CorrelationsService:
    """
    Correlation coefficients, anti-diagonal recovery and every verdict built on them.
    """

    @staticmethod
    def _resolve_configuration(
        table: CoincidenceTable, configuration: Optional[ConfigurationTag], variant: Optional[Variant]
    ) -> tuple[ConfigurationTag, Variant]:
        if table.config is None:
            return configuration or ConfigurationTag.STANDARD_PI4, variant or Variant.SAGNAC
        tag = table.config.tag()
        if tag is None:
            raise ConfigurationError(
                f'table taken at alpha={table.config.alpha}, beta={table.config.beta}, '
                f'pre-phase={table.config.bob_pre_phase}; analysis needs a pi/4 setting'
            )
        if configuration is not None and configuration != tag:
            raise ConfigurationError(f'table was taken in {tag.value}, not {configuration.value}')
        return tag, variant or table.config.variant

    @staticmethod
    def _coefficient(values: np.ndarray, variances: Optional[np.ndarray], j: int, s: int) -> Estimate:
        indices = _quadruple_indices(j, s)
        quadruple = values[indices]
        denominator = quadruple.sum()
        if denominator <= 0:
            raise ZeroDenominator(f'coincidences of polarization pair ({j}, {s}) sum to zero')
        coefficient = float(PARITY_SIGNS @ quadruple / denominator)
        if variances is None:
            return Estimate(value=coefficient)
        # delta method: dE/dv_k = (sign_k - E) / sum
        channel_variances = np.where(variances[indices] > 0, variances[indices], EMPTY_CHANNEL_VARIANCE)
        variance = float(((PARITY_SIGNS - coefficient) ** 2 @ channel_variances) / denominator**2)
        return Estimate(value=coefficient, sigma=math.sqrt(variance))

    def correlation_set(
        self,
        table: CoincidenceTable,
        configuration: Optional[ConfigurationTag] = None,
        variant: Optional[Variant] = None,
    ) -> CorrelationSet:
        """
        Port-parity correlation coefficient of each polarization pair.

        Args:
            table: probabilities, or counts already accidental corrected and normalized
            configuration: phase setting; read from the table when it carries its config
            variant: interferometer flavour; read from the table when it carries its config

        Returns:
            E_HH, E_VV, E_HV, E_VH with sigma zero for probabilities and delta-method sigma for counts
        """
        tag, variant = self._resolve_configuration(table, configuration, variant)
        values = table.array()
        variances = table.variance_array() if table.kind == TableKind.COUNT else None
        coefficients = {
            name: self._coefficient(values, variances, j, s) for name, (j, s) in POLARIZATION_PAIRS.items()
        }
        return CorrelationSet(**coefficients, configuration=tag, variant=variant)

    def bootstrap_correlation_set(
        self,
        table: CoincidenceTable,
        resamples: int = 1000,
        seed: int = settings.DEFAULT_SEED,
        configuration: Optional[ConfigurationTag] = None,
        variant: Optional[Variant] = None,
    ) -> CorrelationSet:
        """
        Same coefficients with sigma from Poisson resampling of every channel instead of the delta method.
        """
        if resamples < 2:
            raise RangeError(f'bootstrap needs at least 2 resamples, got {resamples}')
        point = self.correlation_set(table, configuration, variant)
        if table.kind == TableKind.PROBABILITY:
            return point

        rng = np.random.default_rng(seed)
        draws = rng.poisson(table.array(), size=(resamples, 16)).astype(float)
        coefficients = {}
        for name, (j, s) in POLARIZATION_PAIRS.items():
            quadruples = draws[:, _quadruple_indices(j, s)]
            denominators = quadruples.sum(axis=1)
            valid = denominators > 0
            samples = (quadruples[valid] @ PARITY_SIGNS) / denominators[valid]
            sigma = float(np.std(samples, ddof=1)) if samples.size > 1 else 0.0
            coefficients[name] = Estimate(value=getattr(point, name).value, sigma=sigma)
        return CorrelationSet(**coefficients, configuration=point.configuration, variant=point.variant)

    @staticmethod
    def estimate_antidiagonals(correlations: CorrelationSet) -> AntidiagonalEstimate:
        """
        Recovers f + f*, d + d*, i(f - f*) and i(d - d*) from a standard-configuration set.

        Args:
            correlations: set tagged Standard_pi4

        Returns:
            the four combinations, sigma by quadrature
        """
        if correlations.configuration != ConfigurationTag.STANDARD_PI4:
            raise ConfigurationError(f'anti-diagonals need Standard_pi4, got {correlations.configuration.value}')
        hh, vv, hv, vh = correlations.E_HH, correlations.E_VV, correlations.E_HV, correlations.E_VH
        orthogonal = correlations.variant.orthogonal_sign

        def half(first: Estimate, second: Estimate, sign: int, outer: int = 1) -> Estimate:
            return Estimate(
                value=outer * (first.value + sign * second.value) / 2,
                sigma=math.hypot(first.sigma, second.sigma) / 2,
            )

        return AntidiagonalEstimate(
            f_plus=half(hh, vv, 1),
            d_plus=half(hv, vh, 1, orthogonal),
            f_minus_im=half(hv, vh, -1, orthogonal),
            d_minus_im=half(hh, vv, -1),
        )

    @staticmethod
    def entanglement_test(
        estimates: AntidiagonalEstimate, significance: float = settings.DEFAULT_SIGNIFICANCE
    ) -> EntanglementVerdict:
        """
        Separable states obey |f + f*| <= 1/2 and |d + d*| <= 1/2; a significant excess certifies entanglement.

        Args:
            estimates: recovered anti-diagonal combinations
            significance: z threshold

        Returns:
            Detected when either bound is exceeded by significance sigmas, NotDetected when both estimates sit
            significance sigmas below 1/2, Inconclusive otherwise
        """
        scores = {
            Bound.F_BOUND: _z_score(estimates.f_plus.value, estimates.f_plus.sigma, SEPARABLE_BOUND),
            Bound.D_BOUND: _z_score(estimates.d_plus.value, estimates.d_plus.sigma, SEPARABLE_BOUND),
        }
        strongest = max(scores, key=lambda bound: scores[bound])
        if scores[strongest] >= significance:
            entangled, which_bound = Detection.DETECTED, strongest
        elif all(score <= -significance for score in scores.values()):
            entangled, which_bound = Detection.NOT_DETECTED, Bound.NONE
        else:
            entangled, which_bound = Detection.INCONCLUSIVE, Bound.NONE
        return EntanglementVerdict(
            f_plus_est=estimates.f_plus,
            d_plus_est=estimates.d_plus,
            entangled=entangled,
            z_score=optional_float(scores[strongest]),
            which_bound=which_bound,
            significance=significance,
        )

    @staticmethod
    def identify_bell(
        estimates: AntidiagonalEstimate, significance: float = settings.DEFAULT_SIGNIFICANCE
    ) -> BellIdentification:
        """
        Nearest of the eight Bell signatures; reported only when the winning coordinate clears 1/2.
        """
        point = estimates.values()
        distances = {kind: float(np.linalg.norm(point - kind.signature)) for kind in BellKind}
        nearest = min(distances, key=lambda kind: distances[kind])
        coordinate = getattr(estimates, nearest.coordinate)
        passed = _z_score(coordinate.value, coordinate.sigma, SEPARABLE_BOUND) >= significance
        return BellIdentification(
            best=nearest if passed else None,
            nearest=nearest,
            distance=distances[nearest],
            estimates=estimates,
        )

    @staticmethod
    def fidelity_bounds(summary: Summary) -> FidelityBounds:
        """
        Minimum overlap with each unshifted Bell state implied by f + f* and d + d*.
        """
        if isinstance(summary, AntidiagonalEstimate):
            f_plus, d_plus = summary.f_plus.value, summary.d_plus.value
        else:
            f_plus, d_plus = summary.f_plus, summary.d_plus
        # measured estimates may overshoot 1 within their error
        f_plus, d_plus = float(np.clip(f_plus, -1, 1)), float(np.clip(d_plus, -1, 1))
        return FidelityBounds(
            psi_plus=(abs(f_plus) + f_plus) / 2,
            psi_minus=(abs(f_plus) - f_plus) / 2,
            phi_plus=(abs(d_plus) + d_plus) / 2,
            phi_minus=(abs(d_plus) - d_plus) / 2,
        )

    @staticmethod
    def chsh_bell_parameters(correlations: CorrelationSet) -> BellParameters:
        """
        S_psi = 2 sqrt(2)(f + f*) and S_phi = 2 sqrt(2)(d + d*) from a CHSH-configuration set.
        """
        if correlations.configuration != ConfigurationTag.CHSH_PI4:
            raise ConfigurationError(f'Bell parameters need CHSH_pi4, got {correlations.configuration.value}')
        hh, vv, hv, vh = correlations.E_HH, correlations.E_VV, correlations.E_HV, correlations.E_VH
        orthogonal = correlations.variant.orthogonal_sign
        sigma = math.sqrt(hh.sigma**2 + vv.sigma**2 + hv.sigma**2 + vh.sigma**2)
        return BellParameters(
            S_psi=Estimate(value=hh.value + vv.value - orthogonal * (hv.value - vh.value), sigma=sigma),
            S_phi=Estimate(value=hh.value - vv.value + orthogonal * (hv.value + vh.value), sigma=sigma),
        )

    @staticmethod
    def chsh_verdict(params: BellParameters, significance: float = settings.DEFAULT_SIGNIFICANCE) -> ChshVerdict:
        def check(estimate: Estimate, bound: float) -> BoundCheck:
            score = _z_score(estimate.value, estimate.sigma, bound)
            return BoundCheck(exceeded=score >= significance, z_score=optional_float(score))

        return ChshVerdict(
            significance=significance,
            psi_local=check(params.S_psi, LOCAL_CHSH_BOUND),
            phi_local=check(params.S_phi, LOCAL_CHSH_BOUND),
            psi_separable=check(params.S_psi, SEPARABLE_CHSH_BOUND),
            phi_separable=check(params.S_phi, SEPARABLE_CHSH_BOUND),
        )

    @staticmethod
    def standard_chsh_correlation(probabilities: Sequence[float]) -> float:
        """
        Polarizer correlation E(a, b) = (P_HH + P_VV - P_HV - P_VH) / sum.

        Args:
            probabilities: P_HH, P_VV, P_HV, P_VH (probabilities or counts)

        Returns:
            correlation in [-1, 1]
        """
        values = np.asarray(probabilities, dtype=float)
        if values.shape != (4,):
            raise RangeError(f'expected 4 values (HH, VV, HV, VH), got {values.shape}')
        if np.any(values < 0):
            raise RangeError(f'polarizer outcomes must be non-negative, got {values.tolist()}')
        total = values.sum()
        if total <= 0:
            raise ZeroDenominator('polarizer outcomes sum to zero')
        return float((values[0] + values[1] - values[2] - values[3]) / total)

    @staticmethod
    def polarizer_probabilities(state: PolarizationState, a: float, b: float) -> list[float]:
        """
        Outcome probabilities of linear polarizers at angles a (Alice) and b (Bob).

        Returns:
            P_HH (both transmitted), P_VV (both blocked), P_HV, P_VH
        """

        def analyzer(angle: float) -> tuple[np.ndarray, np.ndarray]:
            return np.array([math.cos(angle), math.sin(angle)]), np.array([-math.sin(angle), math.cos(angle)])

        alice_pass, alice_block = analyzer(a)
        bob_pass, bob_block = analyzer(b)
        outcomes = []
        pairs = ((alice_pass, bob_pass), (alice_block, bob_block), (alice_pass, bob_block), (alice_block, bob_pass))
        for alice, bob in pairs:
            vector = np.kron(alice, bob)
            outcomes.append(float(np.real(vector @ state.rho @ vector)))
        return outcomes

    def conventional_chsh(
        self,
        state: PolarizationState,
        a0: float = 0.0,
        a1: float = math.pi / 4,
        b0: float = math.pi / 8,
        b1: float = 3 * math.pi / 8,
    ) -> float:
        """
        Rotation-based CHSH parameter E(a0,b0) - E(a0,b1) + E(a1,b0) + E(a1,b1).
        """

        def correlation(a: float, b: float) -> float:
            return self.standard_chsh_correlation(self.polarizer_probabilities(state, a, b))

        return correlation(a0, b0) - correlation(a0, b1) + correlation(a1, b0) + correlation(a1, b1)

    def analyze_table(
        self,
        table: CoincidenceTable,
        mode: AnalysisMode = AnalysisMode.STANDARD,
        significance: float = settings.DEFAULT_SIGNIFICANCE,
        variant: Optional[Variant] = None,
        normalized: bool = False,
        accidental_corrected: bool = False,
    ) -> AnalysisReport:
        """
        Runs the standard (anti-diagonals, entanglement verdict, Bell identification, fidelity bounds) or the CHSH
        (Bell parameters and bound checks) analysis of one table.

        Args:
            table: probabilities or prepared counts
            mode: standard or chsh
            significance: z threshold of every verdict
            variant: interferometer flavour when the table does not carry its config
            normalized: the counts were calibration-normalized
            accidental_corrected: the counts were accidental corrected

        Returns:
            AnalysisReport
        """
        configuration = ConfigurationTag.STANDARD_PI4 if mode == AnalysisMode.STANDARD else ConfigurationTag.CHSH_PI4
        correlations = self.correlation_set(table, configuration, variant)
        logger.info(f'Analyzing {table.kind.value} table in {mode.value} mode')
        if mode == AnalysisMode.CHSH:
            parameters = self.chsh_bell_parameters(correlations)
            return AnalysisReport(
                mode=mode,
                correlations=correlations,
                bell_parameters=parameters,
                chsh=self.chsh_verdict(parameters, significance),
                normalized=normalized,
                accidental_corrected=accidental_corrected,
            )

        estimates = self.estimate_antidiagonals(correlations)
        return AnalysisReport(
            mode=mode,
            correlations=correlations,
            antidiagonals=estimates,
            verdict=self.entanglement_test(estimates, significance),
            identification=self.identify_bell(estimates, significance),
            fidelity=self.fidelity_bounds(estimates),
            normalized=normalized,
            accidental_corrected=accidental_corrected,
        )


correlations_service = CorrelationsService()
