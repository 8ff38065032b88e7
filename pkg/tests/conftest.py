from typing import Callable, Optional

import numpy as np
import pytest

from app.schemas import (
    BellKind,
    CoincidenceTable,
    CountsRecord,
    ExperimentConfig,
    InterferometerConfig,
    PolarizationState,
    TableKind,
    Variant,
)
from app.services.states_service import states_service

# ---------------- Random generators ----------------


@pytest.fixture(scope='function')
def rng() -> np.random.Generator:
    return np.random.default_rng(20240417)


# ---------------- Interferometer settings ----------------


@pytest.fixture(scope='session')
def standard_config() -> InterferometerConfig:
    return InterferometerConfig.standard()


@pytest.fixture(scope='session')
def chsh_config() -> InterferometerConfig:
    return InterferometerConfig.chsh()


@pytest.fixture(params=list(Variant), ids=lambda variant: variant.value)
def variant(request: pytest.FixtureRequest) -> Variant:
    return request.param


# ---------------- States ----------------


@pytest.fixture(scope='session')
def psi_plus() -> PolarizationState:
    return states_service.bell_state(BellKind.PSI_PLUS)


@pytest.fixture(scope='session')
def phi_minus() -> PolarizationState:
    return states_service.bell_state(BellKind.PHI_MINUS)


@pytest.fixture(scope='session')
def maximally_mixed() -> PolarizationState:
    return states_service.maximally_mixed()


# ---------------- Experiments ----------------


@pytest.fixture(scope='session')
def ideal_experiment() -> Callable[..., ExperimentConfig]:
    """
    Lossless, dark-count free acquisition with the requested number of expected pairs.
    """

    def _ideal_experiment(pairs: float, duration: float = 1000.0, seed: int = 0, **kwargs) -> ExperimentConfig:
        return ExperimentConfig(pair_rate=pairs / duration, duration=duration, rng_seed=seed, **kwargs)

    return _ideal_experiment


@pytest.fixture(scope='session')
def lab_experiment() -> ExperimentConfig:
    """
    Source and detectors of a typical tabletop run: a few kcps singles and tens of cps per coincidence channel.
    """
    return ExperimentConfig(efficiency=0.012, dark_rate=1000.0, duration=100.0, rng_seed=7)


@pytest.fixture(scope='session')
def counts_record() -> Callable[..., CountsRecord]:
    """
    Builds a raw CountsRecord from explicit channel counts and singles.
    """

    def _counts_record(
        values: list[float],
        singles: list[float],
        duration: float = 100.0,
        bin_width: int = 5,
        config: Optional[InterferometerConfig] = None,
        **flags: bool,
    ) -> CountsRecord:
        table = CoincidenceTable(
            values=values, kind=TableKind.COUNT, singles=singles, variances=values, config=config
        )
        return CountsRecord(coincidences=table, duration=duration, bin_width=bin_width, **flags)

    return _counts_record
