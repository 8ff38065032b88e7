import json
from pathlib import Path
from typing import Any, Optional, Type, TypeVar, Union

import pandas as pd
from loguru import logger
from pandas.errors import EmptyDataError, ParserError
from pydantic import BaseModel

from app.core.config import settings
from app.schemas import SWEEP_COLUMNS, RunManifest, TimestampStream
from app.services.utils.custom_exceptions import MalformedFile

TIMESTAMP_COLUMNS = ('detector', 'timestamp_ns')
MANIFEST_SUFFIX = '.manifest.json'

Model = TypeVar('Model', bound=BaseModel)
PathLike = Union[str, Path]


def write_json(data: Union[BaseModel, dict[str, Any]], path: PathLike) -> Path:
    """
    Writes a model (through its own json encoding) or a plain dict as indented JSON.

    Args:
        data: model or dictionary
        path: destination file

    Returns:
        path written
    """
    path = Path(path)
    text = data.json(indent=settings.JSON_INDENT) if isinstance(data, BaseModel) else json.dumps(data, indent=2)
    path.write_text(text + '\n')
    logger.info(f'Wrote {path}')
    return path


def read_model(path: PathLike, model: Type[Model]) -> Model:
    """
    Parses a JSON file into a model; validation errors propagate as pydantic.ValidationError.
    """
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise MalformedFile(f'{path} is not valid JSON: {e}') from e
    return model.parse_obj(raw)


def write_timestamps(stream: TimestampStream, path: PathLike) -> Path:
    path = Path(path)
    frame = pd.DataFrame({'detector': stream.detectors, 'timestamp_ns': stream.timestamps})
    frame.to_csv(path, index=False, columns=list(TIMESTAMP_COLUMNS))
    logger.info(f'Wrote {len(stream)} events to {path}')
    return path


def read_timestamps(path: PathLike, duration: Optional[float] = None) -> TimestampStream:
    """
    Reads a "detector,timestamp_ns" CSV.

    Args:
        path: CSV file
        duration: acquisition time in seconds, when known

    Returns:
        TimestampStream in file order
    """
    try:
        frame = pd.read_csv(path, dtype='int64')
    except EmptyDataError as e:
        raise MalformedFile(f'{path} is empty; expected header {",".join(TIMESTAMP_COLUMNS)}') from e
    except (ParserError, ValueError) as e:
        raise MalformedFile(f'{path} could not be parsed as integer columns: {e}') from e
    if tuple(frame.columns) != TIMESTAMP_COLUMNS:
        raise MalformedFile(f'{path} has columns {list(frame.columns)}, expected {list(TIMESTAMP_COLUMNS)}')
    return TimestampStream(
        detectors=frame['detector'].to_numpy(), timestamps=frame['timestamp_ns'].to_numpy(), duration=duration
    )


def write_sweep(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, columns=list(SWEEP_COLUMNS))
    logger.info(f'Wrote {len(frame)} sweep points to {path}')
    return path


def read_sweep(path: PathLike) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision='round_trip')
    if tuple(frame.columns) != SWEEP_COLUMNS:
        raise MalformedFile(f'{path} has columns {list(frame.columns)}, expected {list(SWEEP_COLUMNS)}')
    return frame


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(output.name + MANIFEST_SUFFIX)


def write_manifest(manifest: RunManifest, output: PathLike) -> Path:
    """
    Writes the manifest next to one output file as <output>.manifest.json.
    """
    path = manifest_path(output)
    path.write_text(manifest.json(indent=settings.JSON_INDENT) + '\n')
    return path
