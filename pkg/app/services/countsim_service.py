import math
from typing import Optional

import numpy as np
from loguru import logger

from app.core.config import settings
from app.schemas import (
    CalibrationRecord,
    CoincidenceTable,
    CountsRecord,
    ExperimentConfig,
    GeneratedStream,
    InterferometerConfig,
    TableKind,
    TimestampStream,
)
from app.services.utils.custom_exceptions import (
    AlreadyCorrected,
    ConfigError,
    EmptyChannel,
    InvalidCalibration,
    NotCorrected,
    UnsortedStream,
)

NS_PER_SECOND = 1e9
ALICE_DETECTORS = 4
# pair arrival times are drawn in chunks of this many inter-arrival intervals at least
MIN_ARRIVAL_CHUNK = 1024


class CountSimService:
    """
    Forward model from ideal probabilities to counts or time tags, and the inverse counting pipeline:
    binning, accidental correction, calibration and normalization.
    """

    @staticmethod
    def check(config: ExperimentConfig) -> ExperimentConfig:
        """
        Validates the physical ranges of an experiment config.

        Args:
            config: experiment parameters

        Returns:
            the same config
        """
        efficiency = np.asarray(config.efficiency)
        dark_rate = np.asarray(config.dark_rate)
        if efficiency.shape != (8,) or dark_rate.shape != (8,):
            raise ConfigError('efficiency and dark_rate need one value per detector (8)')
        if np.any(~np.isfinite(efficiency)) or np.any(efficiency <= 0) or np.any(efficiency > 1):
            raise ConfigError(f'detector efficiencies must lie in (0, 1], got {efficiency.tolist()}')
        if np.any(~np.isfinite(dark_rate)) or np.any(dark_rate < 0):
            raise ConfigError(f'dark rates must be non-negative, got {dark_rate.tolist()}')
        if not math.isfinite(config.pair_rate) or config.pair_rate < 0:
            raise ConfigError(f'pair rate must be non-negative, got {config.pair_rate}')
        if not math.isfinite(config.duration) or config.duration <= 0:
            raise ConfigError(f'duration must be positive, got {config.duration}')
        if config.bin_width < 1:
            raise ConfigError(f'bin width must be at least 1 ns, got {config.bin_width}')
        if config.rng_seed < 0:
            raise ConfigError(f'seed must be unsigned, got {config.rng_seed}')
        return config

    @staticmethod
    def _channel_probabilities(probabilities: CoincidenceTable) -> np.ndarray:
        if probabilities.kind != TableKind.PROBABILITY:
            raise ConfigError('the forward model needs a probability table')
        values = probabilities.array()
        return values / values.sum()

    @staticmethod
    def _count_table(
        coincidences: np.ndarray,
        singles: np.ndarray,
        config: Optional[InterferometerConfig],
    ) -> CoincidenceTable:
        values = coincidences.reshape(-1).astype(float)
        return CoincidenceTable(
            values=values.tolist(),
            kind=TableKind.COUNT,
            singles=singles.astype(float).tolist(),
            variances=values.tolist(),
            config=config,
        )

    def simulate_counts(self, probabilities: CoincidenceTable, config: ExperimentConfig) -> CountsRecord:
        """
        Draws one acquisition run directly as counts.

        Detected pairs per channel are Poisson with mean N P eta_A eta_B. Singles add the pairs whose partner was
        lost and Poisson dark counts. Accidentals are Poisson with mean S_i S_j tau / T and coincidences are capped
        by the smaller contributing singles count.

        Args:
            probabilities: ideal probability table
            config: experiment parameters

        Returns:
            raw CountsRecord with variances equal to the counts
        """
        self.check(config)
        channel = self._channel_probabilities(probabilities).reshape(4, 4)
        rng = np.random.default_rng(config.rng_seed)
        efficiency = np.asarray(config.efficiency)
        alice_eff, bob_eff = efficiency[:ALICE_DETECTORS], efficiency[ALICE_DETECTORS:]
        mean_pairs = config.expected_pairs * channel

        detected = rng.poisson(mean_pairs * np.outer(alice_eff, bob_eff))
        alice_only = rng.poisson(mean_pairs * np.outer(alice_eff, 1 - bob_eff))
        bob_only = rng.poisson(mean_pairs * np.outer(1 - alice_eff, bob_eff))
        dark = rng.poisson(np.asarray(config.dark_rate) * config.duration)

        alice_singles = detected.sum(axis=1) + alice_only.sum(axis=1) + dark[:ALICE_DETECTORS]
        bob_singles = detected.sum(axis=0) + bob_only.sum(axis=0) + dark[ALICE_DETECTORS:]
        accidental_mean = np.outer(alice_singles, bob_singles) * config.bin_width_s / config.duration
        coincidences = detected + rng.poisson(accidental_mean)
        coincidences = np.minimum(coincidences, np.minimum.outer(alice_singles, bob_singles))

        logger.debug(f'Simulated {coincidences.sum()} coincidences from {config.expected_pairs:.6g} expected pairs')
        singles = np.concatenate([alice_singles, bob_singles])
        return CountsRecord(
            coincidences=self._count_table(coincidences, singles, probabilities.config),
            duration=config.duration,
            bin_width=config.bin_width,
        )

    @staticmethod
    def _pair_arrivals(rng: np.random.Generator, pair_rate: float, duration_ns: float) -> np.ndarray:
        """
        Cumulative exponential inter-arrival times inside [0, duration_ns).
        """
        if pair_rate <= 0:
            return np.empty(0)
        mean_interval = NS_PER_SECOND / pair_rate
        expected = duration_ns / mean_interval
        chunk = int(expected + 10 * math.sqrt(expected)) + MIN_ARRIVAL_CHUNK
        arrivals = []
        last = 0.0
        while last < duration_ns:
            times = last + np.cumsum(rng.exponential(mean_interval, size=chunk))
            arrivals.append(times)
            last = float(times[-1])
        joined = np.concatenate(arrivals)
        return joined[joined < duration_ns]

    def generate_timestamps(self, probabilities: CoincidenceTable, config: ExperimentConfig) -> GeneratedStream:
        """
        Draws one acquisition run as a time-tagged event stream.

        Pairs arrive with exponential spacing, each lands in a channel drawn from the probabilities and each photon
        survives with its detector's efficiency. Pairs losing both photons are thinned out of the arrival process
        before drawing, which leaves the statistics of the visible events unchanged. Both photons of a pair share
        one timestamp and dark counts are uniform in time.

        Args:
            probabilities: ideal probability table
            config: experiment parameters

        Returns:
            sorted stream and the per-channel tally of pairs whose photons were both detected
        """
        self.check(config)
        channel = self._channel_probabilities(probabilities).reshape(4, 4)
        rng = np.random.default_rng(config.rng_seed)
        duration_ns = config.duration * NS_PER_SECOND
        efficiency = np.asarray(config.efficiency)
        alice_eff, bob_eff = efficiency[:ALICE_DETECTORS], efficiency[ALICE_DETECTORS:]

        # outcome index = 16 * pattern + channel; pattern 0 both seen, 1 Alice only, 2 Bob only
        outcomes = np.stack(
            [
                channel * np.outer(alice_eff, bob_eff),
                channel * np.outer(alice_eff, 1 - bob_eff),
                channel * np.outer(1 - alice_eff, bob_eff),
            ]
        ).reshape(-1)
        visible = float(outcomes.sum())
        photons = 2 * outcomes[:16].sum() + outcomes[16:].sum()
        expected_events = config.duration * (config.pair_rate * photons + float(np.sum(config.dark_rate)))
        if expected_events > settings.MAX_STREAM_EVENTS:
            raise ConfigError(
                f'run would tag about {expected_events:.3g} events, above the limit of {settings.MAX_STREAM_EVENTS}; '
                'emit counts only or shorten the run'
            )
        arrivals = np.floor(self._pair_arrivals(rng, config.pair_rate * visible, duration_ns)).astype(np.int64)
        pattern, channels = np.divmod(rng.choice(outcomes.size, size=arrivals.size, p=outcomes / visible), 16)
        alice_mode, bob_mode = np.divmod(channels, 4)
        alice_kept, bob_kept = pattern != 2, pattern != 1
        truth = np.bincount(channels[pattern == 0], minlength=16)

        dark_counts = rng.poisson(np.asarray(config.dark_rate) * config.duration)
        dark_detectors = np.repeat(np.arange(8), dark_counts)
        dark_times = rng.integers(0, max(int(duration_ns), 1), size=dark_detectors.size)

        detectors = np.concatenate([alice_mode[alice_kept], ALICE_DETECTORS + bob_mode[bob_kept], dark_detectors])
        timestamps = np.concatenate([arrivals[alice_kept], arrivals[bob_kept], dark_times]).astype(np.int64)
        order = np.argsort(timestamps, kind='stable')
        logger.debug(f'Generated {arrivals.size} visible pairs and {dark_detectors.size} dark counts')
        return GeneratedStream(
            stream=TimestampStream(
                detectors=detectors[order], timestamps=timestamps[order], duration=config.duration
            ),
            true_coincidences=truth.tolist(),
        )

    def bin_and_count(
        self,
        stream: TimestampStream,
        bin_width: int,
        duration: Optional[float] = None,
        config: Optional[InterferometerConfig] = None,
    ) -> CountsRecord:
        """
        Counts singles per detector and Alice x Bob coincidences per time bin floor(t / bin_width).

        Every Alice-Bob pairing inside a multi-hit bin is one coincidence; same-party pairings are ignored.

        Args:
            stream: events sorted by timestamp
            bin_width: bin width in ns
            duration: acquisition time in seconds; taken from the stream when omitted
            config: interferometer settings to attach to the table

        Returns:
            raw CountsRecord
        """
        if bin_width < 1:
            raise ConfigError(f'bin width must be at least 1 ns, got {bin_width}')
        timestamps, detectors = stream.timestamps, stream.detectors
        if np.any(np.diff(timestamps) < 0):
            raise UnsortedStream('timestamps are not in ascending order')
        duration = duration or stream.duration
        if duration is None:
            if not len(stream):
                raise ConfigError('duration of an empty stream is unknown')
            duration = (int(timestamps[-1]) + 1) / NS_PER_SECOND

        singles = np.bincount(detectors, minlength=8)
        coincidences = np.zeros((4, 4), dtype=np.int64)
        if len(stream):
            bins, slot = np.unique(timestamps // bin_width, return_inverse=True)
            is_alice = detectors < ALICE_DETECTORS
            has_alice = np.bincount(slot[is_alice], minlength=bins.size) > 0
            has_bob = np.bincount(slot[~is_alice], minlength=bins.size) > 0
            shared = has_alice & has_bob
            kept = shared[slot]
            compact = np.cumsum(shared) - 1
            hits = np.zeros((int(shared.sum()), 8), dtype=np.int64)
            np.add.at(hits, (compact[slot[kept]], detectors[kept]), 1)
            coincidences = hits[:, :ALICE_DETECTORS].T @ hits[:, ALICE_DETECTORS:]

        logger.debug(f'Binned {len(stream)} events into {coincidences.sum()} coincidences')
        return CountsRecord(
            coincidences=self._count_table(coincidences, singles, config),
            duration=duration,
            bin_width=bin_width,
        )

    @staticmethod
    def accidental_correction(record: CountsRecord, bin_width: Optional[int] = None) -> CountsRecord:
        """
        Subtracts the singles-product accidental estimate S_i S_j tau / T from every channel, clamping at zero.

        Args:
            record: raw counts
            bin_width: coincidence window in ns; the record's own width when omitted

        Returns:
            corrected record; variances keep the raw Poisson values
        """
        if record.accidental_corrected:
            raise AlreadyCorrected('accidentals were already subtracted')
        tau = (bin_width or record.bin_width) / NS_PER_SECOND
        singles = record.singles
        estimate = np.outer(singles[:ALICE_DETECTORS], singles[ALICE_DETECTORS:]).reshape(-1) * tau / record.duration
        raw = record.coincidences.array()
        corrected = raw - estimate
        if np.any(corrected < 0):
            logger.warning(f'Accidental correction clamped {(corrected < 0).sum()} channels at zero')
        update = {
            'values': np.clip(corrected, 0, None).tolist(),
            'variances': record.coincidences.variance_array().tolist(),
        }
        table = record.coincidences.copy(update=update)
        return record.copy(update={'coincidences': table, 'accidental_corrected': True})

    @staticmethod
    def calibrate(record: CountsRecord, source_tag: str = 'unentangled') -> CalibrationRecord:
        """
        Relative efficiency of each detector pair, count * 16 / total, from an equal-flux unentangled source.
        """
        if not record.accidental_corrected:
            raise NotCorrected('calibration needs accidental corrected counts')
        counts = record.coincidences.array()
        empty = [index for index, value in enumerate(counts) if value <= 0]
        if empty:
            raise EmptyChannel(f'calibration channels {empty} recorded no coincidences')
        factors = counts * 16 / counts.sum()
        return CalibrationRecord(relative_efficiency=(factors / factors.mean()).tolist(), source_tag=source_tag)

    @staticmethod
    def normalize(record: CountsRecord, calibration: CalibrationRecord) -> CountsRecord:
        """
        Divides every channel by its relative efficiency and every variance by its square.
        """
        if not record.accidental_corrected:
            raise NotCorrected('normalize accidental corrected counts only')
        if record.normalized:
            raise AlreadyCorrected('counts were already normalized')
        factors = np.asarray(calibration.relative_efficiency, dtype=float)
        if factors.shape != (16,) or np.any(~np.isfinite(factors)) or np.any(factors <= 0):
            raise InvalidCalibration('calibration needs 16 positive finite factors')
        table = record.coincidences
        update = {
            'values': (table.array() / factors).tolist(),
            'variances': (table.variance_array() / factors**2).tolist(),
        }
        return record.copy(update={'coincidences': table.copy(update=update), 'normalized': True})


countsim_service = CountSimService()
