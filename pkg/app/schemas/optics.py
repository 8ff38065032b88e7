import json
import math
from typing import Any, Optional

import numpy as np
from pydantic import root_validator, validator

from app.core.config import settings
from app.schemas.common import Base, ConfigurationTag, TableKind, Variant, decode_matrix
from app.schemas.states import check_density_matrix

# per-party mode order: port-major, polarization-minor
MODE_NAMES = ('H0', 'V0', 'H1', 'V1')
DETECTOR_NAMES = tuple(f'{m[0]}A{m[1]}' for m in MODE_NAMES) + tuple(f'{m[0]}B{m[1]}' for m in MODE_NAMES)
CHANNEL_KEYS = tuple(f'{a[0]}A{a[1]}{b[0]}B{b[1]}' for a in MODE_NAMES for b in MODE_NAMES)


def mode_index(port: int, polarization: int) -> int:
    """
    Mode index inside one party's four modes; polarization 0 is H, 1 is V.
    """
    return 2 * port + polarization


def channel_index(alice_mode: int, bob_mode: int) -> int:
    return 4 * alice_mode + bob_mode


class InterferometerConfig(Base):
    """
    Settings of Alice's and Bob's interferometers.

    Attributes:
        variant: Sagnac or Mach-Zehnder
        alpha: Alice's phase in radians
        beta: Bob's phase in radians
        bob_pre_phase: phase on Bob's vertical component before his interferometer, pi/4 in CHSH mode
    """

    variant: Variant = Variant.SAGNAC
    alpha: float = math.pi / 4
    beta: float = math.pi / 4
    bob_pre_phase: float = 0.0

    @validator('alpha', 'beta', 'bob_pre_phase')  # type: ignore
    def validate_phase(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError(f'phase must be finite, got {v}')
        return v

    @classmethod
    def standard(cls, variant: Variant = Variant.SAGNAC) -> 'InterferometerConfig':
        return cls(variant=variant)

    @classmethod
    def chsh(cls, variant: Variant = Variant.SAGNAC) -> 'InterferometerConfig':
        return cls(variant=variant, bob_pre_phase=math.pi / 4)

    def tag(self) -> Optional[ConfigurationTag]:
        """
        Returns the analysis configuration these phases correspond to, or None for any other setting.
        """
        quarter = math.pi / 4
        if not (math.isclose(self.alpha, quarter, abs_tol=1e-12) and math.isclose(self.beta, quarter, abs_tol=1e-12)):
            return None
        if math.isclose(self.bob_pre_phase, 0.0, abs_tol=1e-12):
            return ConfigurationTag.STANDARD_PI4
        if math.isclose(self.bob_pre_phase, quarter, abs_tol=1e-12):
            return ConfigurationTag.CHSH_PI4
        return None


class ModeState(Base):
    """
    16x16 density matrix over (Alice mode) x (Bob mode); each party's modes ordered (p0H, p0V, p1H, p1V).
    """

    rho16: np.ndarray

    @validator('rho16', pre=True)  # type: ignore
    def validate_rho16(cls, v: Any) -> np.ndarray:
        return check_density_matrix(decode_matrix(v, 16))


class MarginalCoherences(Base):
    """
    Single-photon interference terms of each detector polarization, zero for every Bell state.
    """

    sigma_HA: float
    sigma_VA: float
    sigma_HB: float
    sigma_VB: float

    @validator('sigma_HA', 'sigma_VA', 'sigma_HB', 'sigma_VB')  # type: ignore
    def validate_range(cls, v: float) -> float:
        if abs(v) > 1 + settings.WEIGHT_TOLERANCE:
            raise ValueError(f'marginal coherence {v} outside [-1, 1]')
        return v


class CoincidenceTable(Base):
    """
    Sixteen coincidence values indexed by (Alice detector, Bob detector), Alice-major.

    Probability tables sum to one. Count tables also carry per-detector singles and per-channel variances,
    which start as the raw Poisson counts and follow every correction applied to the values.

    Attributes:
        values: 16 non-negative numbers in CHANNEL_KEYS order
        kind: Probability or Count
        singles: 8 per-detector values in DETECTOR_NAMES order
        variances: 16 per-channel variances, counts only
        config: interferometer settings the table was produced with, when known
    """

    values: list[float]
    kind: TableKind
    singles: Optional[list[float]] = None
    variances: Optional[list[float]] = None
    config: Optional[InterferometerConfig] = None

    @root_validator(pre=True)  # type: ignore
    def unpack_keyed(cls, data: dict[str, Any]) -> dict[str, Any]:
        data = dict(data)
        if 'values' not in data and all(key in data for key in CHANNEL_KEYS):
            data['values'] = [data.pop(key) for key in CHANNEL_KEYS]
        if isinstance(data.get('singles'), dict):
            data['singles'] = [data['singles'][name] for name in DETECTOR_NAMES]
        if isinstance(data.get('variances'), dict):
            data['variances'] = [data['variances'][key] for key in CHANNEL_KEYS]
        return data

    @validator('values', 'variances')  # type: ignore
    def validate_channels(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is None:
            return v
        if len(v) != 16:
            raise ValueError(f'expected 16 channel values, got {len(v)}')
        if any(not math.isfinite(x) or x < 0 for x in v):
            raise ValueError('channel values must be finite and non-negative')
        return [float(x) for x in v]

    @validator('singles')  # type: ignore
    def validate_singles(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is None:
            return v
        if len(v) != 8:
            raise ValueError(f'expected 8 singles values, got {len(v)}')
        if any(not math.isfinite(x) or x < 0 for x in v):
            raise ValueError('singles must be finite and non-negative')
        return [float(x) for x in v]

    @root_validator(skip_on_failure=True)  # type: ignore
    def validate_kind(cls, values: dict[str, Any]) -> dict[str, Any]:
        kind = values['kind']
        if kind == TableKind.PROBABILITY and abs(sum(values['values']) - 1) > settings.PROBABILITY_SUM_TOLERANCE:
            raise ValueError(f'probabilities sum to {sum(values["values"])!r}, expected 1')
        if kind == TableKind.COUNT and values.get('singles') is None:
            raise ValueError('count tables require singles')
        return values

    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def matrix(self) -> np.ndarray:
        """
        Values as a 4x4 array indexed [alice_mode, bob_mode].
        """
        return self.array().reshape(4, 4)

    def variance_array(self) -> np.ndarray:
        """
        Per-channel variances; Poisson (variance = value) when none were recorded.
        """
        if self.variances is not None:
            return np.array(self.variances, dtype=float)
        return self.array()

    def value(self, alice: str, bob: str) -> float:
        """
        Looks up one channel by detector names, e.g. value('HA0', 'VB1').
        """
        return self.values[CHANNEL_KEYS.index(f'{alice}{bob}')]

    def dict(self, *args, **kwargs) -> dict[str, Any]:  # type: ignore
        data: dict[str, Any] = dict(zip(CHANNEL_KEYS, self.values))
        data['kind'] = self.kind.value
        if self.singles is not None:
            data['singles'] = dict(zip(DETECTOR_NAMES, self.singles))
        if self.variances is not None:
            data['variances'] = dict(zip(CHANNEL_KEYS, self.variances))
        if self.config is not None:
            data['config'] = self.config.dict()
        return data

    def json(self, *args, **kwargs) -> str:  # type: ignore
        return json.dumps(self.dict(), indent=kwargs.get('indent'))
