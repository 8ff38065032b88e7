import math
from typing import Optional, Sequence

import numpy as np

from app.core.config import settings
from app.schemas import AntidiagonalSummary, BellKind, PolarizationState
from app.services.utils.custom_exceptions import RangeError, WeightError

MAX_MIXTURE_TERMS = 8


class StatesService:
    """
    Factories and transforms for two-photon polarization states in the (HH, HV, VH, VV) basis.
    """

    @staticmethod
    def _from_vector(vector: np.ndarray, label: str) -> PolarizationState:
        vector = np.asarray(vector, dtype=complex)
        vector = vector / np.linalg.norm(vector)
        return PolarizationState(rho=np.outer(vector, vector.conj()), label=label)

    def bell_state(self, kind: BellKind) -> PolarizationState:
        """
        Pure density matrix of one of the eight maximally entangled states.

        Args:
            kind: Bell state, shifted forms included

        Returns:
            rank one PolarizationState labelled with the kind name
        """
        return self._from_vector(kind.vector, label=kind.value)

    def separable_pure(self, a: float, theta_a: float, b: float, theta_b: float) -> PolarizationState:
        """
        Product of cos(a)|H> + e^{i theta_a} sin(a)|V> on Alice's side and the same form on Bob's side.

        Args:
            a: Alice's polarization angle
            theta_a: Alice's relative phase
            b: Bob's polarization angle
            theta_b: Bob's relative phase

        Returns:
            product state; f + f* = sin(2a) sin(2b) cos(theta_a - theta_b) / 2
        """
        alice = np.array([math.cos(a), np.exp(1j * theta_a) * math.sin(a)])
        bob = np.array([math.cos(b), np.exp(1j * theta_b) * math.sin(b)])
        return self._from_vector(np.kron(alice, bob), label=f'separable({a:.6g},{theta_a:.6g},{b:.6g},{theta_b:.6g})')

    def psi_theta(self, theta: float) -> PolarizationState:
        """
        (|HV> + e^{i theta}|VH>)/sqrt(2); f + f* = cos(theta), Psi+ at 0 and Psi- at pi.
        """
        return self._from_vector(np.array([0, 1, np.exp(1j * theta), 0]), label=f'psi_theta({theta:.6g})')

    def phi_gamma(self, gamma: float) -> PolarizationState:
        """
        (|HH> + e^{i gamma}|VV>)/sqrt(2); d + d* = cos(gamma), Phi+ at 0 and Phi- at pi.
        """
        return self._from_vector(np.array([1, 0, 0, np.exp(1j * gamma)]), label=f'phi_gamma({gamma:.6g})')

    @staticmethod
    def maximally_mixed() -> PolarizationState:
        return PolarizationState(rho=np.eye(4) / 4, label='maximally_mixed')

    @staticmethod
    def mix(states: Sequence[PolarizationState], weights: Sequence[float]) -> PolarizationState:
        """
        Convex combination of states.

        Args:
            states: one or more states
            weights: non-negative weights summing to one

        Returns:
            sum of weights[i] * states[i]
        """
        if not states or len(states) != len(weights):
            raise WeightError(f'got {len(states)} states for {len(weights)} weights')
        weight_array = np.asarray(weights, dtype=float)
        if np.any(weight_array < 0) or not np.all(np.isfinite(weight_array)):
            raise WeightError(f'weights must be non-negative, got {list(weights)}')
        if abs(weight_array.sum() - 1) > settings.WEIGHT_TOLERANCE:
            raise WeightError(f'weights sum to {weight_array.sum()!r}, expected 1')
        weight_array = weight_array / weight_array.sum()

        rho = sum(w * state.rho for w, state in zip(weight_array, states))
        label = ' + '.join(f'{w:.6g}*{state}' for w, state in zip(weight_array, states))
        return PolarizationState(rho=rho, label=label)

    def white_noise(self, state: PolarizationState, p: float) -> PolarizationState:
        """
        p * state + (1 - p) * I/4.
        """
        if not 0 <= p <= 1:
            raise RangeError(f'white noise visibility must lie in [0, 1], got {p}')
        mixed = self.mix([state, self.maximally_mixed()], [p, 1 - p])
        return PolarizationState(rho=mixed.rho, label=f'white_noise({state}, {p:.6g})')

    @staticmethod
    def antidiagonal_summary(state: PolarizationState) -> AntidiagonalSummary:
        d, f = state.d, state.f
        return AntidiagonalSummary(
            f_plus=2 * f.real,
            d_plus=2 * d.real,
            f_minus_im=-2 * f.imag,
            d_minus_im=-2 * d.imag,
        )

    @staticmethod
    def partial_transpose(state: PolarizationState) -> np.ndarray:
        """
        Transposes Bob's qubit: rho[(a, b), (a', b')] -> rho[(a, b'), (a', b)].
        """
        return state.rho.reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)

    def negativity(self, state: PolarizationState) -> float:
        eigenvalues = np.linalg.eigvalsh(self.partial_transpose(state))
        return float(-eigenvalues[eigenvalues < 0].sum())

    @staticmethod
    def bell_fidelity(state: PolarizationState, kind: BellKind) -> float:
        vector = kind.vector
        return float(np.real(vector.conj() @ state.rho @ vector))

    @staticmethod
    def random_state(rng: np.random.Generator, rank: int = 4) -> PolarizationState:
        """
        Ginibre-distributed density matrix of the requested rank.
        """
        if not 1 <= rank <= 4:
            raise RangeError(f'rank must lie in 1-4, got {rank}')
        ginibre = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
        rho = ginibre @ ginibre.conj().T
        rho = (rho + rho.conj().T) / 2
        return PolarizationState(rho=rho / np.trace(rho).real, label=f'random_rank{rank}')

    def random_separable_pure(self, rng: np.random.Generator) -> PolarizationState:
        a, b = rng.uniform(0, math.pi, size=2)
        theta_a, theta_b = rng.uniform(0, 2 * math.pi, size=2)
        return self.separable_pure(a, theta_a, b, theta_b)

    def random_separable_mixture(self, rng: np.random.Generator, terms: Optional[int] = None) -> PolarizationState:
        """
        Dirichlet-weighted mixture of up to eight random product states.
        """
        if terms is None:
            terms = int(rng.integers(1, MAX_MIXTURE_TERMS + 1))
        if not 1 <= terms <= MAX_MIXTURE_TERMS:
            raise RangeError(f'mixture needs 1-{MAX_MIXTURE_TERMS} terms, got {terms}')
        weights = rng.dirichlet(np.ones(terms))
        weights = weights / weights.sum()
        components = [self.random_separable_pure(rng) for _ in range(terms)]
        mixture = self.mix(components, weights.tolist())
        return PolarizationState(rho=mixture.rho, label=f'separable_mixture({terms})')


states_service = StatesService()
