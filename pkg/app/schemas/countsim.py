import json
from typing import Any, Optional, Union

import numpy as np
from pydantic import root_validator, validator

from app.core.config import settings
from app.schemas.common import Base
from app.schemas.optics import CHANNEL_KEYS, CoincidenceTable

Broadcastable = Union[float, list[float]]


class ExperimentConfig(Base):
    """
    Parameters of one simulated acquisition run. Physical ranges are checked by the simulator, which raises
    ConfigError, so a config can be loaded, inspected and reported before it is rejected.

    Attributes:
        pair_rate: pairs per second emitted by the source
        duration: integration time in seconds
        efficiency: 8 detection efficiencies in detector order HA0, VA0, HA1, VA1, HB0, VB0, HB1, VB1
        dark_rate: 8 dark count rates in counts per second
        bin_width: coincidence bin width in ns
        rng_seed: seed of the run's random generator
    """

    pair_rate: float = settings.SOURCE_PAIR_RATE
    duration: float = settings.DEFAULT_RUN_DURATION_S
    efficiency: list[float] = [1.0] * 8
    dark_rate: list[float] = [0.0] * 8
    bin_width: int = settings.DEFAULT_BIN_WIDTH_NS
    rng_seed: int = settings.DEFAULT_SEED

    @validator('efficiency', 'dark_rate', pre=True)  # type: ignore
    def broadcast(cls, v: Broadcastable) -> list[float]:
        if isinstance(v, (int, float)):
            return [float(v)] * 8
        if len(v) == 1:
            return [float(v[0])] * 8
        return [float(x) for x in v]

    @property
    def expected_pairs(self) -> float:
        return self.pair_rate * self.duration

    @property
    def bin_width_s(self) -> float:
        return self.bin_width * 1e-9


class TimestampStream(Base):
    """
    Detection events sorted by time.

    Attributes:
        detectors: detector ids 0-7 (HA0, VA0, HA1, VA1, HB0, VB0, HB1, VB1)
        timestamps: unsigned integer nanoseconds, ascending
        duration: acquisition time in seconds when known
    """

    detectors: np.ndarray
    timestamps: np.ndarray
    duration: Optional[float] = None

    @validator('detectors', pre=True)  # type: ignore
    def validate_detectors(cls, v: Any) -> np.ndarray:
        array = np.asarray(v, dtype=np.int64).reshape(-1)
        if array.size and (array.min() < 0 or array.max() > 7):
            raise ValueError('detector ids must be within 0-7')
        array.setflags(write=False)
        return array

    @validator('timestamps', pre=True)  # type: ignore
    def validate_timestamps(cls, v: Any) -> np.ndarray:
        array = np.asarray(v, dtype=np.int64).reshape(-1)
        if array.size and array.min() < 0:
            raise ValueError('timestamps must be non-negative nanoseconds')
        array.setflags(write=False)
        return array

    @root_validator(skip_on_failure=True)  # type: ignore
    def validate_lengths(cls, values: dict[str, Any]) -> dict[str, Any]:
        if values['detectors'].shape != values['timestamps'].shape:
            raise ValueError('detectors and timestamps differ in length')
        return values

    def __len__(self) -> int:
        return int(self.timestamps.size)


class GeneratedStream(Base):
    """
    A simulated stream together with the generator's own tally of pairs whose both photons were detected.
    """

    stream: TimestampStream
    true_coincidences: list[int]

    @validator('true_coincidences')  # type: ignore
    def validate_tally(cls, v: list[int]) -> list[int]:
        if len(v) != 16:
            raise ValueError('ground truth needs one tally per channel')
        return v


class CountsRecord(Base):
    """
    Coincidence and singles counts of one run, plus the pipeline stages already applied.

    Attributes:
        coincidences: Count table; its singles are the per-detector totals
        duration: integration time in seconds
        bin_width: coincidence bin width in ns
        accidental_corrected: accidentals were subtracted
        normalized: channels were divided by calibration factors
    """

    coincidences: CoincidenceTable
    duration: float
    bin_width: int = settings.DEFAULT_BIN_WIDTH_NS
    accidental_corrected: bool = False
    normalized: bool = False

    @root_validator(skip_on_failure=True)  # type: ignore
    def validate_flags(cls, values: dict[str, Any]) -> dict[str, Any]:
        if values['normalized'] and not values['accidental_corrected']:
            raise ValueError('normalized counts must be accidental corrected first')
        if values['duration'] <= 0:
            raise ValueError('duration must be positive')
        return values

    @property
    def singles(self) -> np.ndarray:
        return np.array(self.coincidences.singles, dtype=float)


class CalibrationRecord(Base):
    """
    Relative efficiency of each detector combination, normalized to mean one.
    """

    relative_efficiency: list[float]
    source_tag: str = 'unentangled'

    @root_validator(pre=True)  # type: ignore
    def unpack_keyed(cls, data: dict[str, Any]) -> dict[str, Any]:
        data = dict(data)
        if isinstance(data.get('relative_efficiency'), dict):
            data['relative_efficiency'] = [data['relative_efficiency'][key] for key in CHANNEL_KEYS]
        return data

    @validator('relative_efficiency')  # type: ignore
    def validate_factors(cls, v: list[float]) -> list[float]:
        if len(v) != 16:
            raise ValueError(f'expected 16 channel factors, got {len(v)}')
        if any(not np.isfinite(x) or x <= 0 for x in v):
            raise ValueError('calibration factors must be positive')
        if abs(float(np.mean(v)) - 1) > settings.WEIGHT_TOLERANCE:
            raise ValueError(f'calibration factors average {np.mean(v)}, expected 1')
        return [float(x) for x in v]

    def dict(self, *args, **kwargs) -> dict[str, Any]:  # type: ignore
        return {
            'relative_efficiency': dict(zip(CHANNEL_KEYS, self.relative_efficiency)),
            'source_tag': self.source_tag,
        }

    def json(self, *args, **kwargs) -> str:  # type: ignore
        return json.dumps(self.dict(), indent=kwargs.get('indent'))
