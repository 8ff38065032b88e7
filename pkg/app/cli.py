import argparse
import math
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import ValidationError

from app.core.config import settings
from app.schemas import (
    AnalysisMode,
    BellKind,
    CalibrationRecord,
    CoincidenceTable,
    CountsRecord,
    ExperimentConfig,
    InterferometerConfig,
    PolarizationState,
    RunManifest,
    SweepFamily,
    Variant,
)
from app.services.correlations_service import correlations_service
from app.services.countsim_service import countsim_service
from app.services.optics_service import optics_service
from app.services.states_service import states_service
from app.services.utils.custom_exceptions import NPIException
from app.services.utils.file_io import (
    read_model,
    read_timestamps,
    write_json,
    write_manifest,
    write_sweep,
    write_timestamps,
)
from app.services.utils.logger import configure_logging
from app.worker_tasks.multiprocessing_tasks import build_sweep_points, run_sweep

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# (inputs, outputs) of one command
CommandResult = tuple[list[Path], list[Path]]


class NPIArgumentParser(argparse.ArgumentParser):
    """
    Usage errors exit with code 1 so they stay distinct from data errors (code 2).
    """

    def error(self, message: str) -> None:  # type: ignore
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def _global_options(parser: argparse.ArgumentParser, suppress: bool = False) -> None:
    def default(value: Any) -> Any:
        return argparse.SUPPRESS if suppress else value

    parser.add_argument('--out', type=Path, default=default(None), help='output file')
    parser.add_argument('--seed', type=int, default=default(settings.DEFAULT_SEED), help='random seed')
    parser.add_argument('--quiet', action='store_true', default=default(False), help='log warnings only')
    parser.add_argument('--manifest', type=Path, default=default(None), help='rerun the command a manifest records')


def _interferometer_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--variant', choices=[v.value for v in Variant], default=Variant.SAGNAC.value)
    parser.add_argument('--alpha', type=float, default=math.pi / 4, help="Alice's phase in radians")
    parser.add_argument('--beta', type=float, default=math.pi / 4, help="Bob's phase in radians")
    parser.add_argument('--chsh', action='store_true', help="pi/4 phase on Bob's vertical input")
    parser.add_argument('--pre-phase', type=float, default=0.0, help="explicit phase on Bob's vertical input")


def _experiment_options(parser: argparse.ArgumentParser, duration: float) -> None:
    parser.add_argument('--pairs-per-sec', type=float, default=settings.SOURCE_PAIR_RATE)
    parser.add_argument('--duration', type=float, default=duration, help='seconds')
    parser.add_argument('--efficiency', type=float, nargs='+', default=[1.0], help='8 values or one for all')
    parser.add_argument('--dark', type=float, nargs='+', default=[0.0], help='counts/s, 8 values or one for all')
    parser.add_argument('--bin-ns', type=int, default=settings.DEFAULT_BIN_WIDTH_NS)


def _interferometer(args: argparse.Namespace) -> InterferometerConfig:
    return InterferometerConfig(
        variant=Variant(args.variant),
        alpha=args.alpha,
        beta=args.beta,
        bob_pre_phase=math.pi / 4 if args.chsh else args.pre_phase,
    )


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    return ExperimentConfig(
        pair_rate=args.pairs_per_sec,
        duration=args.duration,
        efficiency=args.efficiency,
        dark_rate=args.dark,
        bin_width=args.bin_ns,
        rng_seed=args.seed,
    )


def _output(args: argparse.Namespace, fallback: str) -> Path:
    return Path(args.out) if args.out else Path(fallback)


def cmd_state(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CommandResult:
    inputs: list[Path] = []
    if args.bell:
        try:
            kind = BellKind.from_cli(args.bell)
        except ValueError as e:
            parser.error(str(e))
        state = states_service.bell_state(kind)
    elif args.psi_theta is not None:
        state = states_service.psi_theta(args.psi_theta)
    elif args.phi_gamma is not None:
        state = states_service.phi_gamma(args.phi_gamma)
    elif args.separable:
        state = states_service.separable_pure(*args.separable)
    elif args.maximally_mixed:
        state = states_service.maximally_mixed()
    elif args.random_rank:
        state = states_service.random_state(np.random.default_rng(args.seed), args.random_rank)
    elif args.mix:
        components, weights = [], []
        for entry in args.mix:
            path, _, weight = entry.rpartition(':')
            if not path:
                parser.error(f'--mix entries look like FILE:WEIGHT, got {entry!r}')
            inputs.append(Path(path))
            components.append(read_model(path, PolarizationState))
            weights.append(float(weight))
        state = states_service.mix(components, weights)
    elif args.state:
        inputs.append(args.state)
        state = read_model(args.state, PolarizationState)
    else:
        parser.error('choose a state: --bell, --psi-theta, --phi-gamma, --separable, --maximally-mixed, '
                     '--random-rank, --mix or --state')

    if args.white_noise is not None:
        state = states_service.white_noise(state, args.white_noise)
    if args.label:
        state = PolarizationState(rho=state.rho, label=args.label)

    summary = states_service.antidiagonal_summary(state)
    logger.info(f'{state}: f+f*={summary.f_plus:.6g}, d+d*={summary.d_plus:.6g}')
    return inputs, [write_json(state, _output(args, 'state.json'))]


def cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CommandResult:
    state = read_model(args.state, PolarizationState)
    config = _interferometer(args)
    after = optics_service.propagate(optics_service.embed(state), config)
    table = optics_service.detection_probabilities(after, config)
    table = table.copy(update={'singles': optics_service.singles_probabilities(after)})
    return [args.state], [write_json(table, _output(args, 'table.json'))]


def cmd_mc(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CommandResult:
    state = read_model(args.state, PolarizationState)
    experiment = countsim_service.check(_experiment(args))
    probabilities = optics_service.simulate_probabilities(state, _interferometer(args))
    outputs = []

    if args.emit == 'timestamps':
        stream_path = args.timestamps_out or _output(args, 'timestamps.csv')
    else:
        counts_path = _output(args, 'counts.json')
        stream_path = args.timestamps_out or counts_path.with_suffix('.csv')

    if args.emit == 'counts':
        record = countsim_service.simulate_counts(probabilities, experiment)
    else:
        generated = countsim_service.generate_timestamps(probabilities, experiment)
        outputs.append(write_timestamps(generated.stream, stream_path))
        if args.emit == 'timestamps':
            return [args.state], outputs
        record = countsim_service.bin_and_count(
            generated.stream, experiment.bin_width, experiment.duration, probabilities.config
        )

    if args.correct_accidentals:
        record = countsim_service.accidental_correction(record)
    logger.info(f'Recorded {record.coincidences.array().sum():.6g} coincidences over {record.duration} s')
    outputs.append(write_json(record, counts_path))
    return [args.state], outputs


def _load_record(args: argparse.Namespace) -> tuple[CoincidenceTable, Optional[CountsRecord], list[Path]]:
    if args.table:
        return read_model(args.table, CoincidenceTable), None, [args.table]
    if args.counts:
        record = read_model(args.counts, CountsRecord)
        return record.coincidences, record, [args.counts]
    mode = AnalysisMode(args.mode)
    variant = Variant(args.variant)
    if mode == AnalysisMode.CHSH:
        config = InterferometerConfig.chsh(variant)
    else:
        config = InterferometerConfig.standard(variant)
    stream = read_timestamps(args.timestamps, args.duration)
    record = countsim_service.bin_and_count(stream, args.bin_ns, args.duration, config)
    return record.coincidences, record, [args.timestamps]


def cmd_analyze(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CommandResult:
    table, record, inputs = _load_record(args)
    if record is not None:
        if not record.accidental_corrected:
            record = countsim_service.accidental_correction(record)
        if args.calibration:
            inputs.append(args.calibration)
            if not record.normalized:
                record = countsim_service.normalize(record, read_model(args.calibration, CalibrationRecord))
        elif not record.normalized:
            logger.warning('No calibration given, analyzing counts without normalization')
        table = record.coincidences

    report = correlations_service.analyze_table(
        table,
        mode=AnalysisMode(args.mode),
        significance=args.significance,
        variant=Variant(args.variant) if table.config is None else None,
        normalized=record is not None and record.normalized,
        accidental_corrected=record is not None and record.accidental_corrected,
    )
    if report.verdict is not None and report.identification is not None:
        identified = report.identification.best.value if report.identification.best else 'none'
        logger.info(f'Entanglement {report.verdict.entangled.value}, Bell state {identified}')
    if report.bell_parameters is not None:
        logger.info(f'S_psi={report.bell_parameters.S_psi.value:.4f}, S_phi={report.bell_parameters.S_phi.value:.4f}')
    return inputs, [write_json(report, _output(args, 'report.json'))]


def cmd_sweep(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CommandResult:
    if args.points < 1:
        parser.error('--points must be at least 1')
    phases = np.linspace(args.start, args.stop, args.points)
    points = build_sweep_points(
        family=SweepFamily(args.family),
        phases=phases.tolist(),
        experiment=countsim_service.check(_experiment(args)),
        variant=Variant(args.variant),
        analytic=args.analytic,
    )
    frame = run_sweep(points, workers=args.workers)
    return [], [write_sweep(frame, _output(args, 'sweep.csv'))]


def cmd_calibrate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> CommandResult:
    record = read_model(args.counts, CountsRecord)
    calibration = countsim_service.calibrate(record, source_tag=args.source_tag)
    return [args.counts], [write_json(calibration, _output(args, 'calibration.json'))]


def build_parser() -> NPIArgumentParser:
    parser = NPIArgumentParser(prog='npi', description=settings.DESCRIPTION)
    _global_options(parser)
    commands = parser.add_subparsers(dest='command', parser_class=NPIArgumentParser)

    state = commands.add_parser('state', help='write a polarization state')
    _global_options(state, suppress=True)
    source = state.add_mutually_exclusive_group()
    source.add_argument('--bell', help='psi+, psi-, phi+, phi- or a shifted form such as psi+s')
    source.add_argument('--psi-theta', type=float, help='(HV + e^{i theta} VH)/sqrt(2)')
    source.add_argument('--phi-gamma', type=float, help='(HH + e^{i gamma} VV)/sqrt(2)')
    source.add_argument('--separable', type=float, nargs=4, metavar=('A', 'THETA_A', 'B', 'THETA_B'))
    source.add_argument('--maximally-mixed', action='store_true')
    source.add_argument('--random-rank', type=int, choices=(1, 2, 3, 4), help='random state seeded by --seed')
    source.add_argument('--mix', nargs='+', metavar='FILE:WEIGHT')
    source.add_argument('--state', type=Path, help='existing state file')
    state.add_argument('--white-noise', type=float, metavar='P', help='p * state + (1 - p) * I/4')
    state.add_argument('--label')
    state.set_defaults(handler=cmd_state)

    simulate = commands.add_parser('simulate', help='exact detection probabilities of a state')
    _global_options(simulate, suppress=True)
    simulate.add_argument('state', type=Path)
    _interferometer_options(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    mc = commands.add_parser('mc', help='Monte Carlo counts or time tags of a state')
    _global_options(mc, suppress=True)
    mc.add_argument('state', type=Path)
    _interferometer_options(mc)
    _experiment_options(mc, duration=settings.DEFAULT_RUN_DURATION_S)
    mc.add_argument('--emit', choices=('counts', 'timestamps', 'both'), default='counts')
    mc.add_argument('--timestamps-out', type=Path)
    mc.add_argument('--correct-accidentals', action='store_true')
    mc.set_defaults(handler=cmd_mc)

    analyze = commands.add_parser('analyze', help='standard or CHSH analysis of a table, counts or time tags')
    _global_options(analyze, suppress=True)
    data = analyze.add_mutually_exclusive_group(required=True)
    data.add_argument('--table', type=Path, help='probability table')
    data.add_argument('--counts', type=Path, help='counts record')
    data.add_argument('--timestamps', type=Path, help='detector,timestamp_ns CSV')
    analyze.add_argument('--duration', type=float, help='acquisition time of a timestamp file in seconds')
    analyze.add_argument('--bin-ns', type=int, default=settings.DEFAULT_BIN_WIDTH_NS)
    analyze.add_argument('--calibration', type=Path)
    analyze.add_argument('--mode', choices=[m.value for m in AnalysisMode], default=AnalysisMode.STANDARD.value)
    analyze.add_argument('--variant', choices=[v.value for v in Variant], default=Variant.SAGNAC.value)
    analyze.add_argument('--significance', type=float, default=settings.DEFAULT_SIGNIFICANCE)
    analyze.set_defaults(handler=cmd_analyze)

    sweep = commands.add_parser('sweep', help='phase sweep of the psi(theta) or phi(gamma) family')
    _global_options(sweep, suppress=True)
    sweep.add_argument('--family', choices=[f.value for f in SweepFamily], default=SweepFamily.PSI.value)
    sweep.add_argument('--points', type=int, default=25)
    sweep.add_argument('--start', type=float, default=0.0)
    sweep.add_argument('--stop', type=float, default=math.pi)
    sweep.add_argument('--analytic', action='store_true', help='exact probabilities instead of counts')
    sweep.add_argument('--variant', choices=[v.value for v in Variant], default=Variant.SAGNAC.value)
    sweep.add_argument('--workers', type=int)
    _experiment_options(sweep, duration=settings.DEFAULT_SWEEP_DURATION_S)
    sweep.set_defaults(handler=cmd_sweep)

    calibrate = commands.add_parser('calibrate', help='relative channel efficiencies from an unentangled run')
    _global_options(calibrate, suppress=True)
    calibrate.add_argument('counts', type=Path)
    calibrate.add_argument('--source-tag', default='unentangled')
    calibrate.set_defaults(handler=cmd_calibrate)
    return parser


def _parameters(args: argparse.Namespace) -> dict[str, Any]:
    parameters = {}
    for key, value in sorted(vars(args).items()):
        if key in ('handler', 'manifest'):
            continue
        parameters[key] = str(value) if isinstance(value, Path) else value
    return parameters


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.manifest:
        replayed = read_model(args.manifest, RunManifest)
        argv = replayed.argv
        args = parser.parse_args(argv)
    if args.command is None:
        parser.error('choose a command or replay one with --manifest')
    configure_logging(quiet=args.quiet)

    handler: Callable[[argparse.Namespace, argparse.ArgumentParser], CommandResult] = args.handler
    inputs, outputs = handler(args, parser)
    manifest = RunManifest(
        command=args.command,
        argv=list(argv),
        parameters=_parameters(args),
        inputs=[str(path) for path in inputs],
        outputs=[str(path) for path in outputs],
        rng_seed=args.seed,
    )
    for output in outputs:
        write_manifest(manifest, output)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point of the npi command.

    Returns:
        0 on success, 1 for usage errors, 2 for data and validation errors
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        return run(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except (NPIException, ValidationError, OSError, ValueError) as e:
        logger.error(f'{type(e).__name__}: {e}')
        return EXIT_DATA


if __name__ == '__main__':
    sys.exit(main())
