import math
from collections import defaultdict
from typing import Callable

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.schemas import (
    BellKind,
    CalibrationRecord,
    CoincidenceTable,
    CountsRecord,
    ExperimentConfig,
    InterferometerConfig,
    PolarizationState,
    TableKind,
    TimestampStream,
)
from app.services.correlations_service import correlations_service
from app.services.countsim_service import countsim_service
from app.services.optics_service import optics_service
from app.services.states_service import states_service
from app.services.utils.custom_exceptions import (
    AlreadyCorrected,
    ConfigError,
    EmptyChannel,
    InvalidCalibration,
    NotCorrected,
    UnsortedStream,
)

SKEWED_EFFICIENCY = [0.9, 0.6, 0.8, 0.7, 0.75, 0.95, 0.65, 0.85]

events = st.lists(
    st.tuples(st.integers(min_value=0, max_value=7), st.integers(min_value=0, max_value=60)), max_size=40
)


@pytest.fixture(scope='module')
def uniform_table() -> CoincidenceTable:
    return optics_service.simulate_probabilities(states_service.maximally_mixed(), InterferometerConfig.standard())


@pytest.fixture(scope='module')
def psi_plus_table() -> CoincidenceTable:
    state = states_service.bell_state(BellKind.PSI_PLUS)
    return optics_service.simulate_probabilities(state, InterferometerConfig.standard())


def brute_force_coincidences(detectors: list[int], timestamps: list[int], bin_width: int) -> np.ndarray:
    by_bin: dict[int, list[int]] = defaultdict(list)
    for detector, timestamp in zip(detectors, timestamps):
        by_bin[timestamp // bin_width].append(detector)
    counts = np.zeros((4, 4))
    for members in by_bin.values():
        for alice in (d for d in members if d < 4):
            for bob in (d for d in members if d >= 4):
                counts[alice, bob - 4] += 1
    return counts.reshape(-1)


def prepared_counts(
    state: PolarizationState, config: InterferometerConfig, experiment: ExperimentConfig
) -> CountsRecord:
    probabilities = optics_service.simulate_probabilities(state, config)
    return countsim_service.accidental_correction(countsim_service.simulate_counts(probabilities, experiment))


# ---------------- Configuration ----------------


@pytest.mark.parametrize(
    'update',
    [
        {'efficiency': 0.0},
        {'efficiency': 1.5},
        {'dark_rate': -1.0},
        {'duration': 0.0},
        {'bin_width': 0},
        {'pair_rate': -1.0},
        {'efficiency': [0.5] * 7},
    ],
    ids=[
        'zero_efficiency',
        'efficiency_above_one',
        'negative_dark',
        'zero_duration',
        'zero_bin',
        'negative_rate',
        'short',
    ],
)
def test_check_rejects_unphysical_config(update: dict) -> None:
    with pytest.raises(ConfigError):
        countsim_service.check(ExperimentConfig(**update))


def test_experiment_config_broadcasts_scalars() -> None:
    config = ExperimentConfig(efficiency=0.012, dark_rate=[1000])
    assert config.efficiency == [0.012] * 8
    assert config.dark_rate == [1000.0] * 8
    assert countsim_service.check(config) is config


def test_simulate_counts_needs_probabilities(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([1.0] * 16, [4.0] * 8)
    with pytest.raises(ConfigError):
        countsim_service.simulate_counts(record.coincidences, ExperimentConfig())


# ---------------- Count simulation ----------------


def test_ideal_counts_follow_probabilities(
    psi_plus_table: CoincidenceTable, ideal_experiment: Callable[..., ExperimentConfig]
) -> None:
    pairs = 1e5
    record = countsim_service.simulate_counts(psi_plus_table, ideal_experiment(pairs, seed=11))
    table = record.coincidences
    assert table.kind == TableKind.COUNT
    assert abs(sum(table.values) - pairs) <= 5 * math.sqrt(pairs)
    assert abs(table.value('HA0', 'HB0') - pairs / 8) <= 5 * math.sqrt(pairs / 8)
    assert table.value('HA0', 'HB1') <= 2
    assert table.variances == table.values
    assert table.config == psi_plus_table.config
    assert not record.accidental_corrected


def test_counts_never_exceed_singles(
    psi_plus_table: CoincidenceTable, lab_experiment: ExperimentConfig
) -> None:
    record = countsim_service.simulate_counts(psi_plus_table, lab_experiment)
    matrix = record.coincidences.matrix()
    singles = record.singles
    assert np.all(matrix <= np.minimum.outer(singles[:4], singles[4:]))


def test_no_pairs_means_no_coincidences(uniform_table: CoincidenceTable) -> None:
    record = countsim_service.simulate_counts(uniform_table, ExperimentConfig(pair_rate=0.0, duration=10.0))
    assert sum(record.coincidences.values) == 0
    assert not np.any(record.singles)


def test_dark_counts_only(uniform_table: CoincidenceTable) -> None:
    config = ExperimentConfig(pair_rate=0.0, duration=10.0, dark_rate=50.0, rng_seed=4)
    record = countsim_service.simulate_counts(uniform_table, config)
    assert np.all(np.abs(record.singles - 500) <= 5 * math.sqrt(500))
    assert sum(record.coincidences.values) <= 2


def test_lab_rates(psi_plus_table: CoincidenceTable, lab_experiment: ExperimentConfig) -> None:
    record = countsim_service.simulate_counts(psi_plus_table, lab_experiment)
    average_rate = sum(record.coincidences.values) / 16 / lab_experiment.duration
    assert 2 <= average_rate <= 20
    singles_rate = record.singles / lab_experiment.duration
    assert np.all((singles_rate > 3e3) & (singles_rate < 1e4))


def test_simulation_is_deterministic(psi_plus_table: CoincidenceTable, lab_experiment: ExperimentConfig) -> None:
    first = countsim_service.simulate_counts(psi_plus_table, lab_experiment)
    second = countsim_service.simulate_counts(psi_plus_table, lab_experiment)
    other = countsim_service.simulate_counts(psi_plus_table, lab_experiment.copy(update={'rng_seed': 8}))
    assert first.coincidences.values == second.coincidences.values
    assert first.coincidences.singles == second.coincidences.singles
    assert first.coincidences.values != other.coincidences.values


# ---------------- Timestamps and binning ----------------


def test_ideal_stream_has_partnered_events(
    psi_plus_table: CoincidenceTable, ideal_experiment: Callable[..., ExperimentConfig]
) -> None:
    stream = countsim_service.generate_timestamps(psi_plus_table, ideal_experiment(2000, duration=1.0)).stream
    _, multiplicity = np.unique(stream.timestamps, return_counts=True)
    assert np.all(multiplicity % 2 == 0)
    assert np.sum(stream.detectors < 4) == np.sum(stream.detectors >= 4)
    assert np.all(np.diff(stream.timestamps) >= 0)
    assert stream.duration == 1.0


def test_binning_recovers_ground_truth(psi_plus_table: CoincidenceTable) -> None:
    config = ExperimentConfig(pair_rate=10.0, duration=1e4, efficiency=0.8, rng_seed=5)
    generated = countsim_service.generate_timestamps(psi_plus_table, config)
    assert sum(generated.true_coincidences) > 5e4
    record = countsim_service.bin_and_count(generated.stream, config.bin_width, config=psi_plus_table.config)
    assert record.coincidences.values == [float(x) for x in generated.true_coincidences]
    assert record.singles.tolist() == np.bincount(generated.stream.detectors, minlength=8).tolist()
    assert record.duration == config.duration


def test_empty_stream(uniform_table: CoincidenceTable) -> None:
    generated = countsim_service.generate_timestamps(uniform_table, ExperimentConfig(pair_rate=0.0, duration=10.0))
    assert len(generated.stream) == 0
    record = countsim_service.bin_and_count(generated.stream, 5)
    assert sum(record.coincidences.values) == 0
    assert record.duration == 10.0


def test_oversized_stream_is_rejected(psi_plus_table: CoincidenceTable) -> None:
    with pytest.raises(ConfigError, match='events'):
        countsim_service.generate_timestamps(psi_plus_table, ExperimentConfig())
    record = countsim_service.simulate_counts(psi_plus_table, ExperimentConfig(efficiency=0.0027))
    assert record.coincidences.array().sum() > 0


@pytest.mark.parametrize(
    'detectors, timestamps, expected',
    [
        ([0, 4], [12, 14], {0: 1}),
        ([0, 4], [14, 16], {}),
        ([0, 1, 4], [10, 11, 12], {0: 1, 4: 1}),
        ([0, 1], [10, 11], {}),
        ([3, 7, 7], [0, 1, 4], {15: 2}),
    ],
    ids=['same_bin', 'bin_edge', 'multi_hit', 'same_party', 'two_bob_hits'],
)
def test_bin_and_count_examples(detectors: list[int], timestamps: list[int], expected: dict[int, int]) -> None:
    stream = TimestampStream(detectors=detectors, timestamps=timestamps)
    values = countsim_service.bin_and_count(stream, 5, duration=1.0).coincidences.values
    assert values == [float(expected.get(index, 0)) for index in range(16)]


def test_bin_and_count_rejects_unsorted_stream() -> None:
    with pytest.raises(UnsortedStream):
        countsim_service.bin_and_count(TimestampStream(detectors=[0, 4], timestamps=[14, 12]), 5, duration=1.0)


@given(raw=events, bin_width=st.integers(min_value=1, max_value=10))
def test_bin_and_count_matches_brute_force(raw: list[tuple[int, int]], bin_width: int) -> None:
    ordered = sorted(raw, key=lambda event: event[1])
    detectors = [event[0] for event in ordered]
    timestamps = [event[1] for event in ordered]
    stream = TimestampStream(detectors=detectors, timestamps=timestamps)
    record = countsim_service.bin_and_count(stream, bin_width, duration=1.0)
    expected = brute_force_coincidences(detectors, timestamps, bin_width)
    np.testing.assert_array_equal(record.coincidences.array(), expected)

    # reordering events that share a timestamp leaves the counts unchanged
    reordered = [ordered[i] for i in sorted(range(len(ordered)), key=lambda i: (ordered[i][1], -i))]
    swapped = TimestampStream(detectors=[e[0] for e in reordered], timestamps=[e[1] for e in reordered])
    swapped_values = countsim_service.bin_and_count(swapped, bin_width, duration=1.0).coincidences.values
    assert swapped_values == record.coincidences.values


# ---------------- Accidentals ----------------


def test_accidental_correction_arithmetic(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([10.0] * 16, [1e4] * 8, duration=100.0, bin_width=5)
    corrected = countsim_service.accidental_correction(record)
    np.testing.assert_allclose(corrected.coincidences.values, [9.995] * 16)
    assert corrected.coincidences.variances == [10.0] * 16
    assert corrected.accidental_corrected
    with pytest.raises(AlreadyCorrected):
        countsim_service.accidental_correction(corrected)


def test_accidental_correction_without_singles(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([3.0] * 16, [0.0] * 8)
    assert countsim_service.accidental_correction(record).coincidences.values == [3.0] * 16


def test_accidental_correction_clamps_at_zero(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([0.0] * 16, [1e6] * 8, duration=1.0)
    assert countsim_service.accidental_correction(record).coincidences.values == [0.0] * 16


def test_dark_count_coincidences_are_removed(uniform_table: CoincidenceTable) -> None:
    raw_runs, corrected_runs = [], []
    for seed in range(100):
        config = ExperimentConfig(pair_rate=0.0, duration=10.0, dark_rate=2e4, rng_seed=seed)
        record = countsim_service.simulate_counts(uniform_table, config)
        raw_runs.append(record.coincidences.array())
        corrected_runs.append(countsim_service.accidental_correction(record).coincidences.array())
    # accidentals per channel: (2e5)^2 * 5 ns / 10 s
    sigma = math.sqrt(20.0)
    assert np.all(np.mean(raw_runs, axis=0) > 3 * sigma)
    assert np.all(np.abs(np.mean(corrected_runs, axis=0)) <= 3 * sigma)


def test_tabletop_run_reproduces_measured_neighbourhood() -> None:
    state = states_service.white_noise(states_service.bell_state(BellKind.PSI_PLUS), 0.96)
    totals, f_values, f_sigmas, s_values, s_sigmas = [], [], [], [], []
    passed = 0
    for seed in range(100):
        experiment = ExperimentConfig(efficiency=0.0027, dark_rate=1000.0, duration=100.0, rng_seed=seed)
        standard = prepared_counts(state, InterferometerConfig.standard(), experiment)
        chsh = prepared_counts(state, InterferometerConfig.chsh(), experiment)
        f_plus = correlations_service.estimate_antidiagonals(
            correlations_service.correlation_set(standard.coincidences)
        ).f_plus
        s_psi = correlations_service.chsh_bell_parameters(correlations_service.correlation_set(chsh.coincidences)).S_psi
        totals.append(standard.coincidences.array().sum())
        f_values.append(f_plus.value)
        f_sigmas.append(f_plus.sigma)
        s_values.append(s_psi.value)
        s_sigmas.append(s_psi.sigma)
        in_f_band = 0.90 <= f_plus.value <= 1.0 + 2 * f_plus.sigma
        in_s_band = 2.2 <= s_psi.value <= 2 * math.sqrt(2) + 2 * s_psi.sigma
        passed += in_f_band and in_s_band
    # about 1.4e8 pairs * 0.0027^2 detected coincidences per 100 s run
    assert 900 <= np.mean(totals) <= 1150
    assert 0.93 <= np.mean(f_values) <= 0.99
    assert 2.2 <= np.mean(s_values) <= 2 * math.sqrt(2)
    assert 0.005 <= np.mean(f_sigmas) <= 0.05
    assert 0.05 <= np.mean(s_sigmas) <= 0.4
    assert passed >= 90


# ---------------- Calibration and normalization ----------------


def test_calibrate_uniform_counts(counts_record: Callable[..., CountsRecord]) -> None:
    calibration = countsim_service.calibrate(counts_record([100.0] * 16, [400.0] * 8, accidental_corrected=True))
    assert calibration.relative_efficiency == pytest.approx([1.0] * 16)
    assert calibration.source_tag == 'unentangled'


def test_calibrate_needs_corrected_counts(counts_record: Callable[..., CountsRecord]) -> None:
    with pytest.raises(NotCorrected):
        countsim_service.calibrate(counts_record([100.0] * 16, [400.0] * 8))


def test_calibrate_rejects_empty_channel(counts_record: Callable[..., CountsRecord]) -> None:
    values = [100.0] * 16
    values[9] = 0.0
    with pytest.raises(EmptyChannel):
        countsim_service.calibrate(counts_record(values, [400.0] * 8, accidental_corrected=True))


def test_calibrate_recovers_detector_efficiency(uniform_table: CoincidenceTable) -> None:
    efficiency = [1.0, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
    config = ExperimentConfig(pair_rate=1e3, duration=1e3, efficiency=efficiency, rng_seed=2)
    record = countsim_service.accidental_correction(countsim_service.simulate_counts(uniform_table, config))
    calibration = countsim_service.calibrate(record, source_tag='maximally_mixed')
    # detector VA0 sees half the flux: its four channels against the other twelve
    expected = [16 / 14] * 16
    expected[4:8] = [8 / 14] * 4
    np.testing.assert_allclose(calibration.relative_efficiency, expected, rtol=0.03)
    assert calibration.source_tag == 'maximally_mixed'


def test_calibration_record_validation() -> None:
    with pytest.raises(ValueError):
        CalibrationRecord(relative_efficiency=[2.0] * 16)
    with pytest.raises(ValueError):
        CalibrationRecord(relative_efficiency=[0.0] + [16 / 15] * 15)


def test_normalize_by_unit_calibration(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([float(i + 1) for i in range(16)], [400.0] * 8, accidental_corrected=True)
    normalized = countsim_service.normalize(record, CalibrationRecord(relative_efficiency=[1.0] * 16))
    assert normalized.coincidences.values == record.coincidences.values
    assert normalized.normalized
    with pytest.raises(AlreadyCorrected):
        countsim_service.normalize(normalized, CalibrationRecord(relative_efficiency=[1.0] * 16))


def test_normalize_scales_variances(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([8.0] * 16, [400.0] * 8, accidental_corrected=True)
    factors = [0.5] * 8 + [1.5] * 8
    normalized = countsim_service.normalize(record, CalibrationRecord(relative_efficiency=factors))
    np.testing.assert_allclose(normalized.coincidences.values, [16.0] * 8 + [16 / 3] * 8)
    np.testing.assert_allclose(normalized.coincidences.variances, [32.0] * 8 + [32 / 9] * 8)


def test_normalize_needs_corrected_counts(counts_record: Callable[..., CountsRecord]) -> None:
    with pytest.raises(NotCorrected):
        countsim_service.normalize(
            counts_record([8.0] * 16, [400.0] * 8), CalibrationRecord(relative_efficiency=[1.0] * 16)
        )


def test_normalize_rejects_invalid_factors(counts_record: Callable[..., CountsRecord]) -> None:
    record = counts_record([8.0] * 16, [400.0] * 8, accidental_corrected=True)
    calibration = CalibrationRecord.construct(relative_efficiency=[1.0] * 15 + [-1.0], source_tag='broken')
    with pytest.raises(InvalidCalibration):
        countsim_service.normalize(record, calibration)


# ---------------- End to end ----------------


@pytest.fixture(scope='module')
def skewed_calibration(uniform_table: CoincidenceTable) -> CalibrationRecord:
    config = ExperimentConfig(pair_rate=1e5, duration=1e4, efficiency=SKEWED_EFFICIENCY, rng_seed=21)
    return countsim_service.calibrate(
        countsim_service.accidental_correction(countsim_service.simulate_counts(uniform_table, config))
    )


def test_skewed_detectors_recover_psi_plus(skewed_calibration: CalibrationRecord) -> None:
    state = states_service.white_noise(states_service.bell_state(BellKind.PSI_PLUS), 0.96)
    experiment = ExperimentConfig(pair_rate=1e3, duration=1e3, efficiency=SKEWED_EFFICIENCY, rng_seed=22)
    record = countsim_service.normalize(
        prepared_counts(state, InterferometerConfig.standard(), experiment), skewed_calibration
    )
    estimates = correlations_service.estimate_antidiagonals(correlations_service.correlation_set(record.coincidences))
    assert abs(estimates.f_plus.value - 0.96) <= 3 * estimates.f_plus.sigma
    assert abs(estimates.d_plus.value) <= 3 * estimates.d_plus.sigma


def test_skewed_detectors_recover_phi_minus(
    skewed_calibration: CalibrationRecord, phi_minus: PolarizationState
) -> None:
    experiment = ExperimentConfig(pair_rate=1e3, duration=1e3, efficiency=SKEWED_EFFICIENCY, rng_seed=23)
    standard = countsim_service.normalize(
        prepared_counts(phi_minus, InterferometerConfig.standard(), experiment), skewed_calibration
    )
    estimates = correlations_service.estimate_antidiagonals(correlations_service.correlation_set(standard.coincidences))
    assert abs(estimates.d_plus.value + 1) <= 3 * estimates.d_plus.sigma + 1e-12

    chsh = countsim_service.normalize(
        prepared_counts(phi_minus, InterferometerConfig.chsh(), experiment), skewed_calibration
    )
    parameters = correlations_service.chsh_bell_parameters(correlations_service.correlation_set(chsh.coincidences))
    assert abs(parameters.S_phi.value + 2 * math.sqrt(2)) <= 3 * parameters.S_phi.sigma


def test_estimates_converge_as_inverse_root_n(ideal_experiment: Callable[..., ExperimentConfig]) -> None:
    state = states_service.white_noise(states_service.bell_state(BellKind.PSI_PLUS), 0.8)
    probabilities = optics_service.simulate_probabilities(state, InterferometerConfig.standard())
    sizes = [1e3, 1e4, 1e5, 1e6]
    rms = []
    for pairs in sizes:
        errors = []
        for seed in range(100):
            record = countsim_service.accidental_correction(
                countsim_service.simulate_counts(probabilities, ideal_experiment(pairs, seed=seed))
            )
            estimates = correlations_service.estimate_antidiagonals(
                correlations_service.correlation_set(record.coincidences)
            )
            errors.append(estimates.f_plus.value - 0.8)
        rms.append(math.sqrt(np.mean(np.square(errors))))
    slope = np.polyfit(np.log(sizes), np.log(rms), 1)[0]
    assert -0.6 <= slope <= -0.4
