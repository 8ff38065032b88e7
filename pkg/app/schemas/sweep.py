import enum
from typing import Any

from app.schemas.common import Base, Variant
from app.schemas.countsim import ExperimentConfig

SWEEP_COLUMNS = ('phase_rad', 'estimate', 'sigma')


class SweepFamily(str, enum.Enum):
    """
    Phase-swept state families and the anti-diagonal combination each one traces.

    Options:
        PSI: (|HV> + e^{i theta}|VH>)/sqrt(2), estimate is f + f* = cos(theta)
        PHI: (|HH> + e^{i gamma}|VV>)/sqrt(2), estimate is d + d* = cos(gamma)
    """

    PSI = ('psi', 'f_plus')
    PHI = ('phi', 'd_plus')

    def __new__(cls, name: str, coordinate: str) -> 'SweepFamily':
        obj = str.__new__(cls, name)
        obj._value_ = name
        obj.coordinate = coordinate
        return obj


class SweepPoint(Base):
    """
    One grid point of a phase sweep, self-contained so it can be shipped to a worker process.

    Attributes:
        index: position in the grid, fixes the output order
        phase: theta or gamma in radians
        family: state family
        variant: interferometer flavour
        analytic: use exact probabilities instead of simulated counts
        experiment: acquisition parameters with the point's own derived seed
    """

    index: int
    phase: float
    family: SweepFamily
    variant: Variant = Variant.SAGNAC
    analytic: bool = False
    experiment: ExperimentConfig

    def row(self, estimate: float, sigma: float) -> dict[str, Any]:
        return dict(zip(SWEEP_COLUMNS, (self.phase, estimate, sigma)))
