from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.schemas import SWEEP_COLUMNS, PolarizationState, RunManifest, TimestampStream
from app.services.utils.custom_exceptions import MalformedFile
from app.services.utils.file_io import (
    manifest_path,
    read_model,
    read_sweep,
    read_timestamps,
    write_json,
    write_manifest,
    write_sweep,
    write_timestamps,
)


def test_timestamps_csv_keeps_events(tmp_path: Path) -> None:
    stream = TimestampStream(detectors=[0, 4, 3, 6], timestamps=[10, 12, 400, 403], duration=1.0)
    path = write_timestamps(stream, tmp_path / 'tags.csv')
    assert path.read_text().splitlines() == ['detector,timestamp_ns', '0,10', '4,12', '3,400', '6,403']
    restored = read_timestamps(path, duration=1.0)
    np.testing.assert_array_equal(restored.detectors, stream.detectors)
    np.testing.assert_array_equal(restored.timestamps, stream.timestamps)
    assert restored.duration == 1.0


@pytest.mark.parametrize(
    'content',
    ['time,channel\n1,0\n', 'detector,timestamp_ns\n0,abc\n', ''],
    ids=['wrong_header', 'not_integer', 'empty'],
)
def test_malformed_timestamps(tmp_path: Path, content: str) -> None:
    path = tmp_path / 'tags.csv'
    path.write_text(content)
    with pytest.raises(MalformedFile):
        read_timestamps(path)


def test_invalid_json_is_malformed(tmp_path: Path) -> None:
    path = tmp_path / 'state.json'
    path.write_text('{"rho": [')
    with pytest.raises(MalformedFile):
        read_model(path, PolarizationState)


def test_model_json_round_trip(tmp_path: Path, psi_plus: PolarizationState) -> None:
    path = write_json(psi_plus, tmp_path / 'state.json')
    np.testing.assert_array_equal(read_model(path, PolarizationState).rho, psi_plus.rho)


def test_manifest_sits_next_to_output(tmp_path: Path) -> None:
    output = tmp_path / 'counts.json'
    assert manifest_path(output) == tmp_path / 'counts.json.manifest.json'
    manifest = RunManifest(command='mc', argv=['mc', 'state.json'], outputs=[str(output)], rng_seed=4)
    path = write_manifest(manifest, output)
    assert read_model(path, RunManifest) == manifest


def test_sweep_csv(tmp_path: Path) -> None:
    frame = pd.DataFrame({'phase_rad': [0.0, 0.1], 'estimate': [1.0, 0.995004165278026], 'sigma': [0.01, 0.02]})
    restored = read_sweep(write_sweep(frame, tmp_path / 'sweep.csv'))
    assert tuple(restored.columns) == SWEEP_COLUMNS
    pd.testing.assert_frame_equal(restored, frame)


def test_sweep_with_wrong_columns(tmp_path: Path) -> None:
    path = tmp_path / 'sweep.csv'
    path.write_text('theta,value\n0,1\n')
    with pytest.raises(MalformedFile):
        read_sweep(path)
