import os
from enum import Enum
from typing import Optional

import dotenv  # type: ignore
from pydantic import BaseSettings, validator

from app import description, version


class ExecutionMode(str, Enum):
    TEST = 'Test'
    DEVELOP = 'Develop'


class Settings(BaseSettings):
    """
    Configuration class for numeric tolerances, experiment defaults and runtime options.

    Attrs:
    - PROJECT_NAME, VERSION, DESCRIPTION: Basic project information embedded into run manifests.
    - EXECUTION_MODE: Test mode switches logging to DEBUG.
    - HERMITIAN_TOLERANCE, TRACE_TOLERANCE, PSD_TOLERANCE: density-matrix validity checks.
    - WEIGHT_TOLERANCE: how far mixture weights may drift from summing to one.
    - NEGATIVE_PROBABILITY_TOLERANCE: diagonal entries above -tol are clamped to zero, below raise.
    - DEFAULT_SIGNIFICANCE: z threshold used by every verdict.
    - DEFAULT_BIN_WIDTH_NS, DEFAULT_RUN_DURATION_S, DEFAULT_SWEEP_DURATION_S, SOURCE_PAIR_RATE: experiment defaults.
    - DEFAULT_SEED: seed used when the command line does not provide one.
    - MAX_STREAM_EVENTS: upper bound on the expected size of a generated time-tag stream.
    - MAX_PYTHON_PROCESSES: how many processes the sweep pool may run.
    - JSON_INDENT: indentation of written JSON files.
    """

    dotenv.load_dotenv()

    PROJECT_NAME: str = 'NPI simulator'
    VERSION: str = version()
    DESCRIPTION: str = description()
    EXECUTION_MODE: ExecutionMode = ExecutionMode(os.getenv('EXECUTION_MODE', 'Develop'))

    # Density matrices
    HERMITIAN_TOLERANCE: float = 1e-12
    TRACE_TOLERANCE: float = 1e-12
    PSD_TOLERANCE: float = 1e-10
    WEIGHT_TOLERANCE: float = 1e-9
    NEGATIVE_PROBABILITY_TOLERANCE: float = 1e-10
    PROBABILITY_SUM_TOLERANCE: float = 1e-9

    # Analysis
    DEFAULT_SIGNIFICANCE: float = float(os.getenv('DEFAULT_SIGNIFICANCE', 3.0))

    # Experiment
    DEFAULT_BIN_WIDTH_NS: int = 5
    DEFAULT_RUN_DURATION_S: float = 100.0
    DEFAULT_SWEEP_DURATION_S: float = 5.0
    SOURCE_PAIR_RATE: float = 1.4e6
    DEFAULT_SEED: int = int(os.getenv('DEFAULT_SEED', 0))
    MAX_STREAM_EVENTS: int = int(os.getenv('MAX_STREAM_EVENTS', 20_000_000))

    # Workers
    MAX_PYTHON_PROCESSES: int = int(os.getenv('MAX_PYTHON_PROCESSES', 4))

    # Output
    JSON_INDENT: Optional[int] = 2

    @validator('MAX_PYTHON_PROCESSES')  # type: ignore
    def validate_processes(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f'MAX_PYTHON_PROCESSES must be positive, got {v}')
        return v

    class Config:
        case_sensitive = True


settings = Settings()
