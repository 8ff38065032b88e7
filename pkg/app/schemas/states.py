from typing import Any, Optional

import numpy as np
from pydantic import validator

from app.core.config import settings
from app.schemas.common import Base, Estimate, decode_matrix
from app.services.utils.custom_exceptions import InvalidState

POLARIZATION_BASIS = 'HH,HV,VH,VV'


def check_density_matrix(rho: np.ndarray) -> np.ndarray:
    """
    Checks Hermiticity, unit trace and positive semi-definiteness within the configured tolerances.

    Args:
        rho: square complex matrix

    Returns:
        the same matrix when every check passes
    """
    if not np.all(np.isfinite(rho)):
        raise InvalidState('density matrix contains non-finite entries')
    if np.max(np.abs(rho - rho.conj().T)) > settings.HERMITIAN_TOLERANCE:
        raise InvalidState('density matrix is not Hermitian')
    if abs(np.trace(rho) - 1) > settings.TRACE_TOLERANCE:
        raise InvalidState(f'density matrix trace is {np.trace(rho).real:.15g}, expected 1')
    smallest = float(np.linalg.eigvalsh(rho)[0])
    if smallest < -settings.PSD_TOLERANCE:
        raise InvalidState(f'density matrix is not positive semi-definite (eigenvalue {smallest:.3e})')
    return rho


class PolarizationState(Base):
    """
    Two-photon polarization density matrix in the basis (|HH>, |HV>, |VH>, |VV>).

    Element (0, 3) is d = <HH|rho|VV> and element (1, 2) is f = <HV|rho|VH>; the remaining elements are kept
    but only constrained by density-matrix validity.

    Attributes:
        basis: fixed basis tag, serialized for readers
        rho: 4x4 complex matrix, read-only
        label: free-text provenance tag
    """

    basis: str = POLARIZATION_BASIS
    rho: np.ndarray
    label: Optional[str] = None

    @validator('basis')  # type: ignore
    def validate_basis(cls, v: str) -> str:
        if v.replace(' ', '') != POLARIZATION_BASIS:
            raise ValueError(f'unsupported basis {v!r}, expected {POLARIZATION_BASIS!r}')
        return POLARIZATION_BASIS

    @validator('rho', pre=True)  # type: ignore
    def validate_rho(cls, v: Any) -> np.ndarray:
        return check_density_matrix(decode_matrix(v, 4))

    @property
    def d(self) -> complex:
        return complex(self.rho[0, 3])

    @property
    def f(self) -> complex:
        return complex(self.rho[1, 2])

    def __str__(self) -> str:
        return self.label or 'PolarizationState'


class AntidiagonalSummary(Base):
    """
    The four real combinations of the anti-diagonal elements d and f that the interferometer measures.

    Attributes:
        f_plus: f + f*
        d_plus: d + d*
        f_minus_im: i(f - f*)
        d_minus_im: i(d - d*)
    """

    f_plus: float
    d_plus: float
    f_minus_im: float
    d_minus_im: float

    @validator('f_plus', 'd_plus', 'f_minus_im', 'd_minus_im')  # type: ignore
    def validate_magnitude(cls, v: float) -> float:
        if abs(v) > 1 + settings.WEIGHT_TOLERANCE:
            raise ValueError(f'anti-diagonal combination {v} outside [-1, 1]')
        return v

    def as_array(self) -> np.ndarray:
        return np.array([self.f_plus, self.d_plus, self.f_minus_im, self.d_minus_im])


class AntidiagonalEstimate(Base):
    """
    AntidiagonalSummary with standard deviations, as recovered from correlation coefficients.
    """

    f_plus: Estimate
    d_plus: Estimate
    f_minus_im: Estimate
    d_minus_im: Estimate

    @classmethod
    def exact(cls, summary: AntidiagonalSummary) -> 'AntidiagonalEstimate':
        return cls(
            f_plus=Estimate(value=summary.f_plus),
            d_plus=Estimate(value=summary.d_plus),
            f_minus_im=Estimate(value=summary.f_minus_im),
            d_minus_im=Estimate(value=summary.d_minus_im),
        )

    def values(self) -> np.ndarray:
        return np.array([self.f_plus.value, self.d_plus.value, self.f_minus_im.value, self.d_minus_im.value])

    def sigmas(self) -> np.ndarray:
        return np.array([self.f_plus.sigma, self.d_plus.sigma, self.f_minus_im.sigma, self.d_minus_im.sigma])

    def summary(self) -> AntidiagonalSummary:
        return AntidiagonalSummary(
            f_plus=self.f_plus.value,
            d_plus=self.d_plus.value,
            f_minus_im=self.f_minus_im.value,
            d_minus_im=self.d_minus_im.value,
        )
