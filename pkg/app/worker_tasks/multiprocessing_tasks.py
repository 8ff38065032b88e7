import math
import multiprocessing as mp
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

from app.core.config import ExecutionMode, settings
from app.schemas import (
    SWEEP_COLUMNS,
    ExperimentConfig,
    InterferometerConfig,
    SweepFamily,
    SweepPoint,
    Variant,
)
from app.services.correlations_service import correlations_service
from app.services.countsim_service import countsim_service
from app.services.optics_service import optics_service
from app.services.states_service import states_service
from app.services.utils.custom_exceptions import NPIException, RangeError


def build_sweep_points(
    family: SweepFamily,
    phases: Sequence[float],
    experiment: ExperimentConfig,
    variant: Variant = Variant.SAGNAC,
    analytic: bool = False,
) -> list[SweepPoint]:
    """
    Expands a phase grid into self-contained points, each with a seed spawned from the experiment's seed.

    Args:
        family: psi or phi state family
        phases: grid in radians
        experiment: acquisition parameters shared by every point
        variant: interferometer flavour
        analytic: skip the count simulation

    Returns:
        points in grid order
    """
    if not len(phases):
        raise RangeError('sweep grid is empty')
    children = np.random.SeedSequence(experiment.rng_seed).spawn(len(phases))
    return [
        SweepPoint(
            index=index,
            phase=float(phase),
            family=family,
            variant=variant,
            analytic=analytic,
            experiment=experiment.copy(update={'rng_seed': int(child.generate_state(1)[0])}),
        )
        for index, (phase, child) in enumerate(zip(phases, children))
    ]


def run_sweep_point(point: SweepPoint) -> tuple[int, float, float]:
    """
    Simulates one grid point at the standard configuration and recovers the family's anti-diagonal combination.

    Args:
        point: grid point

    Returns:
        grid index, estimate and its sigma; NaN when the point's counts could not be analyzed
    """
    if point.family == SweepFamily.PSI:
        state = states_service.psi_theta(point.phase)
    else:
        state = states_service.phi_gamma(point.phase)
    try:
        table = optics_service.simulate_probabilities(state, InterferometerConfig.standard(point.variant))
        if not point.analytic:
            record = countsim_service.accidental_correction(countsim_service.simulate_counts(table, point.experiment))
            table = record.coincidences
        estimates = correlations_service.estimate_antidiagonals(correlations_service.correlation_set(table))
    except NPIException as e:
        logger.warning(f'Sweep point {point.index} at phase {point.phase} failed: {e}')
        return point.index, math.nan, math.nan
    estimate = getattr(estimates, point.family.coordinate)
    return point.index, estimate.value, estimate.sigma


def run_sweep(points: Sequence[SweepPoint], workers: Optional[int] = None) -> pd.DataFrame:
    """
    Runs every point and collects the results in grid order regardless of completion order.

    Args:
        points: grid points
        workers: process count; MAX_PYTHON_PROCESSES when omitted

    Returns:
        DataFrame with columns phase_rad, estimate, sigma
    """
    if not points:
        raise RangeError('sweep grid is empty')
    processes = workers or settings.MAX_PYTHON_PROCESSES
    # for test mode and single worker we run points one by one
    if settings.EXECUTION_MODE == ExecutionMode.TEST or processes == 1:
        results = [run_sweep_point(point) for point in points]
    else:
        with mp.get_context('spawn').Pool(processes=processes) as mp_pool:
            results = mp_pool.map(run_sweep_point, points)
    by_index = {index: (estimate, sigma) for index, estimate, sigma in results}
    rows = [point.row(*by_index[point.index]) for point in sorted(points, key=lambda point: point.index)]
    logger.info(f'Finished sweep of {len(rows)} points')
    return pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))
