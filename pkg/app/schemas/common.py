import enum
import math
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, validator

SQRT_HALF = 1 / math.sqrt(2)


def encode_matrix(matrix: np.ndarray) -> list[list[list[float]]]:
    """
    Encodes a complex matrix as nested lists of [re, im] pairs.

    Args:
        matrix: square complex matrix

    Returns:
        JSON ready nested list
    """
    return [[[float(value.real), float(value.imag)] for value in row] for row in np.asarray(matrix, dtype=complex)]


def decode_matrix(value: Any, dimension: int) -> np.ndarray:
    """
    Decodes a matrix given as [re, im] pairs, plain numbers or an ndarray into a read-only complex array.

    Args:
        value: serialized or numeric matrix
        dimension: expected size of both axes

    Returns:
        complex ndarray of shape (dimension, dimension)
    """
    if isinstance(value, np.ndarray):
        matrix = np.array(value, dtype=complex)
    else:
        raw = np.asarray(value, dtype=float)
        if raw.shape == (dimension, dimension, 2):
            matrix = raw[..., 0] + 1j * raw[..., 1]
        else:
            matrix = np.array(value, dtype=complex)
    if matrix.shape != (dimension, dimension):
        raise ValueError(f'expected a {dimension}x{dimension} matrix, got shape {matrix.shape}')
    matrix.setflags(write=False)
    return matrix


class Base(BaseModel):
    """
    Base model for every schema in the package: immutable, numpy aware, complex matrices serialized as pairs.
    """

    class Config:
        allow_mutation = False
        arbitrary_types_allowed = True
        json_encoders = {np.ndarray: encode_matrix, complex: lambda z: [z.real, z.imag]}


class Estimate(Base):
    """
    A point estimate with its standard deviation. Exact inputs carry sigma = 0.

    Attributes:
        value: point estimate
        sigma: standard deviation, never negative
    """

    value: float
    sigma: float = 0.0

    @validator('sigma')  # type: ignore
    def validate_sigma(cls, v: float) -> float:
        if v < 0 or math.isnan(v):
            raise ValueError(f'sigma must be a non-negative number, got {v}')
        return v


class Variant(str, enum.Enum):
    """
    Interferometer flavour. Both share one interface so every downstream analysis is variant agnostic.

    Options:
        SAGNAC: phase-stable loop, reflected block carries e^{i phi} Z
        MACH_ZEHNDER: reflected block carries e^{i phi} I
    """

    SAGNAC = 'sagnac'
    MACH_ZEHNDER = 'mz'

    @property
    def orthogonal_sign(self) -> int:
        """
        Sign the variant puts on interference terms of orthogonally polarized coincidences.
        """
        return -1 if self is Variant.SAGNAC else 1

    def polarization_sign(self, polarization: int) -> int:
        """
        Sign of the reflected block for a polarization index (0 = H, 1 = V).
        """
        return -1 if self is Variant.SAGNAC and polarization == 1 else 1


class BellKind(str, enum.Enum):
    """
    The eight maximally entangled states the interferometer tells apart.

    Each option is a tuple of its name, its amplitudes over (HH, HV, VH, VV) before the 1/sqrt(2) factor,
    the antidiagonal coordinate it saturates and the sign of that coordinate.
    """

    PSI_PLUS = ('Psi+', (0, 1, 1, 0), 'f_plus', 1)
    PSI_MINUS = ('Psi-', (0, 1, -1, 0), 'f_plus', -1)
    PHI_PLUS = ('Phi+', (1, 0, 0, 1), 'd_plus', 1)
    PHI_MINUS = ('Phi-', (1, 0, 0, -1), 'd_plus', -1)
    PSI_PLUS_SHIFTED = ('Psi+_shifted', (0, 1, 1j, 0), 'f_minus_im', 1)
    PSI_MINUS_SHIFTED = ('Psi-_shifted', (0, 1, -1j, 0), 'f_minus_im', -1)
    PHI_PLUS_SHIFTED = ('Phi+_shifted', (1, 0, 0, 1j), 'd_minus_im', 1)
    PHI_MINUS_SHIFTED = ('Phi-_shifted', (1, 0, 0, -1j), 'd_minus_im', -1)

    def __new__(cls, name: str, amplitudes: tuple[complex, ...], coordinate: str, sign: int) -> 'BellKind':
        """
        Creates a new instance of the BellKind enum with the state vector and signature attached.

        Args:
            name: printable name, also the serialized value
            amplitudes: unnormalized amplitudes over HH, HV, VH, VV
            coordinate: AntidiagonalSummary field equal to +-1 for this state
            sign: value of that field

        Returns:
            obj: A new instance of the BellKind enum.
        """
        obj = str.__new__(cls, name)
        obj._value_ = name
        obj.amplitudes = tuple(complex(a) for a in amplitudes)
        obj.coordinate = coordinate
        obj.sign = sign
        return obj

    @property
    def vector(self) -> np.ndarray:
        return SQRT_HALF * np.array(self.amplitudes, dtype=complex)

    @property
    def is_shifted(self) -> bool:
        return self.value.endswith('_shifted')

    @property
    def signature(self) -> np.ndarray:
        """
        Point in (f_plus, d_plus, f_minus_im, d_minus_im) space this state maps to.
        """
        point = np.zeros(4)
        point[SIGNATURE_COORDINATES.index(self.coordinate)] = self.sign
        return point

    @property
    def ell_m(self) -> tuple[int, int]:
        """
        The (l, m) pair of the closed-form coincidence probabilities; only defined for unshifted states.
        """
        return self.sign, (1 if self.coordinate == 'f_plus' else -1)

    @classmethod
    def from_cli(cls, name: str) -> 'BellKind':
        """
        Accepts command-line spellings such as 'psi+', 'phi-s' or 'Psi+_shifted'.
        """
        normalized = name.strip().lower().replace('_shifted', 's')
        for kind in cls:
            short = kind.value.lower().replace('_shifted', 's')
            if normalized == short:
                return kind
        raise ValueError(f'unknown Bell state {name!r}')


SIGNATURE_COORDINATES = ('f_plus', 'd_plus', 'f_minus_im', 'd_minus_im')


class TableKind(str, enum.Enum):
    PROBABILITY = 'Probability'
    COUNT = 'Count'


class ConfigurationTag(str, enum.Enum):
    """
    The two phase settings the analysis understands.

    Options:
        STANDARD_PI4: alpha = beta = pi/4, no pre-phase
        CHSH_PI4: standard setting plus a pi/4 phase on Bob's vertical input
    """

    STANDARD_PI4 = 'Standard_pi4'
    CHSH_PI4 = 'CHSH_pi4'


class Detection(str, enum.Enum):
    DETECTED = 'Detected'
    NOT_DETECTED = 'NotDetected'
    INCONCLUSIVE = 'Inconclusive'


class Bound(str, enum.Enum):
    F_BOUND = 'FBound'
    D_BOUND = 'DBound'
    NONE = 'None'


class AnalysisMode(str, enum.Enum):
    STANDARD = 'standard'
    CHSH = 'chsh'


def optional_float(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None
