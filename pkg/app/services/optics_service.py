import math
from typing import Optional

import numpy as np
from loguru import logger
from scipy.linalg import block_diag

from app.core.config import settings
from app.schemas import (
    BellKind,
    CoincidenceTable,
    InterferometerConfig,
    MarginalCoherences,
    ModeState,
    PolarizationState,
    TableKind,
    Variant,
)
from app.services.utils.custom_exceptions import NegativeProbability, UnsupportedState

BEAM_SPLITTER = np.array([[1j, 1], [1, 1j]]) / math.sqrt(2)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# joint 16-mode indices of |HH>, |HV>, |VH>, |VV> with both photons in input port 0
INPUT_PORT_INDICES = np.array([0, 1, 4, 5])

# +1 for V, -1 for H: sign of Bob's pre-phase in the interference terms
PRE_PHASE_SIGN = (-1, 1)


class OpticsService:
    """
    Interferometer operators, propagation of the 16-mode state and detector probabilities.

    Each party's four modes are ordered (port0 H, port0 V, port1 H, port1 V); the joint 16-mode index is
    4 * alice_mode + bob_mode.
    """

    @staticmethod
    def build_M(phi: float, variant: Variant = Variant.SAGNAC) -> np.ndarray:
        """
        One party's interferometer (B x I)(reflected block + X)(B x I).

        Args:
            phi: phase on the reflected path in radians
            variant: Sagnac puts e^{i phi} Z on the reflected block, Mach-Zehnder e^{i phi} I

        Returns:
            4x4 unitary over the party's modes
        """
        reflected = np.exp(1j * phi) * (PAULI_Z if variant is Variant.SAGNAC else IDENTITY_2)
        splitter = np.kron(BEAM_SPLITTER, IDENTITY_2)
        return splitter @ block_diag(reflected, PAULI_X) @ splitter

    def build_U(self, config: InterferometerConfig) -> np.ndarray:
        """
        M(alpha) x (M(beta) D) with D applying Bob's pre-phase to his input-port vertical mode.
        """
        pre_phase = np.diag([1, np.exp(1j * config.bob_pre_phase), 1, 1])
        alice = self.build_M(config.alpha, config.variant)
        bob = self.build_M(config.beta, config.variant) @ pre_phase
        return np.kron(alice, bob)

    @staticmethod
    def embed(state: PolarizationState) -> ModeState:
        rho16 = np.zeros((16, 16), dtype=complex)
        rho16[np.ix_(INPUT_PORT_INDICES, INPUT_PORT_INDICES)] = state.rho
        return ModeState(rho16=rho16)

    def propagate(self, mode_state: ModeState, config: InterferometerConfig) -> ModeState:
        unitary = self.build_U(config)
        rho16 = unitary @ mode_state.rho16 @ unitary.conj().T
        return ModeState(rho16=(rho16 + rho16.conj().T) / 2)

    @staticmethod
    def detection_probabilities(
        mode_state_after: ModeState, config: Optional[InterferometerConfig] = None
    ) -> CoincidenceTable:
        """
        Reads the 16 coincidence probabilities off the diagonal of the propagated state.

        Args:
            mode_state_after: state after both interferometers
            config: settings the state was propagated with, stored on the table

        Returns:
            Probability table in channel order
        """
        diagonal = np.real(np.diag(mode_state_after.rho16))
        smallest = float(diagonal.min())
        if smallest < -settings.NEGATIVE_PROBABILITY_TOLERANCE:
            raise NegativeProbability(f'diagonal entry {smallest:.3e} is below tolerance')
        return CoincidenceTable(values=np.clip(diagonal, 0, None).tolist(), kind=TableKind.PROBABILITY, config=config)

    def simulate_probabilities(self, state: PolarizationState, config: InterferometerConfig) -> CoincidenceTable:
        """
        Full pipeline: embed, propagate and read the detector probabilities.
        """
        logger.debug(f'Propagating {state} through {config.variant.value} at alpha={config.alpha}, beta={config.beta}')
        return self.detection_probabilities(self.propagate(self.embed(state), config), config)

    @staticmethod
    def analytic_bell_probabilities(kind: BellKind, config: InterferometerConfig) -> CoincidenceTable:
        """
        Closed-form table (1/16){1 + l z_j z_s (-1)^{y+z} cos(alpha +- m beta_s)}, + for j != s and - for j = s.

        z_V = -1 for Sagnac and +1 otherwise; beta_s carries Bob's pre-phase with sign -1 for H and +1 for V.

        Args:
            kind: one of the four unshifted Bell states
            config: interferometer settings

        Returns:
            Probability table in channel order
        """
        if kind.is_shifted:
            raise UnsupportedState(f'no closed form for {kind.value}')
        ell, m = kind.ell_m
        values = np.zeros((4, 4))
        for alice_mode in range(4):
            y, j = divmod(alice_mode, 2)
            for bob_mode in range(4):
                z, s = divmod(bob_mode, 2)
                sign = config.variant.polarization_sign(j) * config.variant.polarization_sign(s)
                beta_s = config.beta + PRE_PHASE_SIGN[s] * config.bob_pre_phase
                phase = config.alpha + m * beta_s if j != s else config.alpha - m * beta_s
                values[alice_mode, bob_mode] = (1 + ell * sign * (-1) ** (y + z) * math.cos(phase)) / 16
        return CoincidenceTable(values=values.reshape(-1).tolist(), kind=TableKind.PROBABILITY, config=config)

    @staticmethod
    def singles_probabilities(mode_state_after: ModeState) -> list[float]:
        """
        Per-detector marginals in the order HA0, VA0, HA1, VA1, HB0, VB0, HB1, VB1.
        """
        matrix = np.clip(np.real(np.diag(mode_state_after.rho16)), 0, None).reshape(4, 4)
        return matrix.sum(axis=1).tolist() + matrix.sum(axis=0).tolist()

    @staticmethod
    def marginal_coherences(state: PolarizationState, config: InterferometerConfig) -> MarginalCoherences:
        """
        Single-photon interference terms; a detector's single probability is 1/4 + (-1)^port sigma / 4.
        """
        rho = state.rho
        alice_coherence = complex(rho[0, 2] + rho[1, 3])
        bob_coherence = complex(rho[0, 1] + rho[2, 3]) * np.exp(-1j * config.bob_pre_phase)
        variant = config.variant

        def sigma(phase: float, coherence: complex, polarization: int) -> float:
            value = coherence if polarization == 0 else coherence.conjugate()
            return float(-2 * variant.polarization_sign(polarization) * np.real(np.exp(1j * phase) * value))

        return MarginalCoherences(
            sigma_HA=sigma(config.alpha, alice_coherence, 0),
            sigma_VA=sigma(config.alpha, alice_coherence, 1),
            sigma_HB=sigma(config.beta, bob_coherence, 0),
            sigma_VB=sigma(config.beta, bob_coherence, 1),
        )

    def expanded_probabilities(self, state: PolarizationState, config: InterferometerConfig) -> CoincidenceTable:
        """
        The sixteen probabilities expanded in the density matrix elements of a generic state.

        Interference of the anti-diagonal pairs (js, j's') and (js', j's) gives the correlated part, the
        marginal coherences give the single-photon part.

        Args:
            state: any valid two-photon state
            config: interferometer settings

        Returns:
            Probability table in channel order
        """
        rho = state.rho
        coherences = self.marginal_coherences(state, config)
        alice_sigma = (coherences.sigma_HA, coherences.sigma_VA)
        bob_sigma = (coherences.sigma_HB, coherences.sigma_VB)
        variant = config.variant
        values = np.zeros((4, 4))
        for alice_mode in range(4):
            y, j = divmod(alice_mode, 2)
            for bob_mode in range(4):
                z, s = divmod(bob_mode, 2)
                pre_phase = PRE_PHASE_SIGN[s] * config.bob_pre_phase
                same = rho[2 * j + s, 2 * (1 - j) + (1 - s)] * np.exp(1j * (config.alpha + config.beta + pre_phase))
                crossed = rho[2 * j + (1 - s), 2 * (1 - j) + s] * np.exp(1j * (config.alpha - config.beta - pre_phase))
                sign = variant.polarization_sign(j) * variant.polarization_sign(s) * (-1) ** (y + z)
                values[alice_mode, bob_mode] = (
                    1
                    + 2 * sign * (same.real + crossed.real)
                    + (-1) ** y * alice_sigma[j]
                    + (-1) ** z * bob_sigma[s]
                ) / 16
        return CoincidenceTable(
            values=np.clip(values, 0, None).reshape(-1).tolist(), kind=TableKind.PROBABILITY, config=config
        )


optics_service = OpticsService()
