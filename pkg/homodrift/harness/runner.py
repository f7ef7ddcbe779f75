"""Seeded replications of a configured experiment, merged by a single writer.

Every replication simulates one path with the seed derived from
`(master_seed, delta_index, replication)`, so the numbers never depend on the
number of worker threads, on the order in which jobs complete or on `J`.
"""

from __future__ import annotations

import asyncio
import math
from concurrent.futures import ThreadPoolExecutor
from datetime import UTC, datetime
from importlib.metadata import PackageNotFoundError, version
from typing import TYPE_CHECKING, Callable

import numpy as np
import pandas as pd
from redux import FinishAction

from homodrift.constants import THREADS
from homodrift.estimate import (
    BetaFamily,
    SolverOptions,
    make_score_context,
    mle_hat,
    mle_tilde,
    ou_closed_form_hat,
    ou_closed_form_tilde,
    particles_closed_form,
    solve_estimator,
)
from homodrift.exceptions import ConfigError, HomodriftError
from homodrift.harness.config import (
    DeltaKind,
    EstimatorKind,
    ExperimentConfig,
    ModelKind,
)
from homodrift.harness.output import summaries_frame, write_result, write_table
from homodrift.harness.result import ExperimentResult, Provenance, Truth
from homodrift.homogenize import HomogenizedModel, compute_k, homogenize_model
from homodrift.logging import logger
from homodrift.potentials import MultiscaleModel, ParticleModel
from homodrift.simulate import (
    COMMENSURABILITY_TOLERANCE,
    default_fine_step,
    derive_seed,
    observation_stride,
    simulate_observations,
)
from homodrift.store import create_experiment_store
from homodrift.store.experiment import (
    ExperimentCompleteAction,
    ExperimentGridPointFlaggedEvent,
    ExperimentReportReplicationAction,
    ExperimentStartAction,
    ExperimentState,
    ReplicationRecord,
)
from homodrift.utils.async_ import for_each_completed, run_in_executor

if TYPE_CHECKING:
    from pathlib import Path

    from homodrift.simulate import ObservationSet

MIN_PREFIX = 2


def _now() -> str:
    return datetime.now(UTC).isoformat(timespec='seconds')


def code_version() -> str:
    try:
        return version('homodrift')
    except PackageNotFoundError:
        return 'unknown'


def homogenized_truth(cfg: ExperimentConfig) -> Truth:
    if cfg.model_kind == ModelKind.HOMOGENIZED:
        return Truth(A=cfg.alpha, Sigma=cfg.sigma, K=1.0)
    if cfg.model_kind == ModelKind.PARTICLES:
        k = compute_k(cfg.fast_potential, cfg.sigma, cfg.n_quad)
        return Truth(A=(k * cfg.alpha[0],), Sigma=k * cfg.sigma, K=k)
    _, result = homogenize_model(_multiscale_model(cfg), cfg.n_quad)
    return Truth(A=result.A, Sigma=result.Sigma, K=result.K)


def _multiscale_model(cfg: ExperimentConfig) -> MultiscaleModel:
    return MultiscaleModel(
        alpha=cfg.alpha,
        sigma=cfg.sigma,
        epsilon=cfg.epsilon,
        slow=cfg.slow_potential,
        fast=cfg.fast_potential,
    )


def build_model(
    cfg: ExperimentConfig,
) -> MultiscaleModel | HomogenizedModel | ParticleModel:
    if cfg.model_kind == ModelKind.HOMOGENIZED:
        return HomogenizedModel(A=cfg.alpha, Sigma=cfg.sigma, slow=cfg.slow_potential)
    if cfg.model_kind == ModelKind.PARTICLES:
        return ParticleModel(
            alpha=cfg.alpha[0],
            theta=cfg.theta,
            sigma=cfg.sigma,
            epsilon=cfg.epsilon,
            fast=cfg.fast_potential,
            d=cfg.d,
        )
    return _multiscale_model(cfg)


def fine_step(cfg: ExperimentConfig, delta: float) -> float:
    """Integration step for observations every `delta`, checked against `epsilon`."""
    h = (
        default_fine_step(
            cfg.epsilon,
            delta,
            cfg.h_rule,  # pyright: ignore [reportArgumentType]
        )
        if cfg.h is None
        else cfg.h
    )
    observation_stride(delta, h)
    limit = cfg.epsilon**2 / 10
    if (
        cfg.model_kind != ModelKind.HOMOGENIZED
        and not cfg.fast_potential.is_zero
        and h > limit * (1 + COMMENSURABILITY_TOLERANCE)
        and not cfg.allow_coarse_step
    ):
        msg = (
            f'fine step h={h} does not resolve the fast scale (limit {limit}); '
            'set simulate.allow_coarse_step to proceed'
        )
        raise ConfigError(msg)
    return h


def prefix_grid(cfg: ExperimentConfig, n: int) -> tuple[int, ...]:
    """Observation counts to evaluate, by default `n` and the powers of two below."""
    if cfg.N is not None:
        grid = tuple(sorted({value for value in cfg.N if value <= n}))
        if not grid:
            msg = f'no N in {cfg.N} fits the {n} available observations'
            raise ConfigError(msg)
        return grid
    powers = {2**k for k in range(1, n.bit_length()) if 2**k >= MIN_PREFIX}
    return tuple(sorted({*powers, n}))


def observation_count(cfg: ExperimentConfig, delta: float) -> int:
    n = math.floor(cfg.T / delta + COMMENSURABILITY_TOLERANCE)
    if n < 1:
        msg = f'horizon T={cfg.T} holds no observation at delta={delta}'
        raise ConfigError(msg)
    return n


def estimate_once(
    cfg: ExperimentConfig,
    truth: Truth,
    estimator: EstimatorKind,
    obs: ObservationSet,
    J: int,
) -> tuple[tuple[float, ...], bool, int, str]:
    """Apply one estimator to one observation set.

    Returns `(estimate, converged, iterations, method)`.
    """
    if cfg.model_kind == ModelKind.PARTICLES:
        value = particles_closed_form(obs, filtered=estimator.filtered)
        return (value,), True, 0, 'closed_form'
    if estimator.generic:
        slow = cfg.slow_potential
        ctx = make_score_context(
            obs,
            J,
            BetaFamily.from_spec(cfg.beta, slow.m, J),
            truth.Sigma,
            slow,
            use_filter=estimator.filtered,
            basis_kind=cfg.basis,
            h_target=cfg.h_target,
            R_floor=cfg.R_floor,
        )
        result = solve_estimator(ctx, cfg.a0, SolverOptions())
        return result.a_hat, result.converged, result.iterations, result.method
    closed_form = {
        EstimatorKind.CLOSED_FORM_HAT: ou_closed_form_hat,
        EstimatorKind.CLOSED_FORM_TILDE: ou_closed_form_tilde,
        EstimatorKind.MLE_HAT: mle_hat,
        EstimatorKind.MLE_TILDE: mle_tilde,
    }[estimator]
    mle = estimator in (EstimatorKind.MLE_HAT, EstimatorKind.MLE_TILDE)
    method = 'mle' if mle else 'closed_form'
    return (closed_form(obs),), True, 0, method


def run_replication(
    cfg: ExperimentConfig,
    truth: Truth,
    delta_index: int,
    replication: int,
) -> tuple[ReplicationRecord, ...]:
    """Simulate one path and evaluate every estimator on every prefix and `J`."""
    delta = cfg.delta_values()[delta_index]
    h = fine_step(cfg, delta)
    seed = derive_seed(cfg.master_seed, delta_index, replication)
    n = observation_count(cfg, delta)
    grid = prefix_grid(cfg, n)
    base = {
        'delta_index': delta_index,
        'delta': delta,
        'zeta': cfg.zeta_of(delta_index),
        'replication': replication,
        'seed': seed,
        'h': h,
    }
    # closed forms ignore J, they are evaluated once under the first J
    points = [
        (J, N, estimator)
        for J in cfg.J
        for N in grid
        for estimator in cfg.estimators
        if estimator.generic or J == cfg.J[0]
    ]

    try:
        obs = simulate_observations(build_model(cfg), cfg.T, delta, h, seed)
        if any(estimator.filtered for estimator in cfg.estimators):
            obs = obs.filtered()
    except HomodriftError as exception:
        logger.warning(
            'Replication failed to simulate',
            extra={**base, 'error': str(exception)},
        )
        return tuple(
            ReplicationRecord(
                **base,
                J=J,
                N=N,
                estimator=estimator,
                failure=str(exception),
            )
            for J, N, estimator in points
        )

    records = []
    for J, N, estimator in points:
        prefix = obs.prefix(N)
        try:
            estimate, converged, iterations, method = estimate_once(
                cfg,
                truth,
                estimator,
                prefix,
                J,
            )
        except HomodriftError as exception:
            records.append(
                ReplicationRecord(
                    **base,
                    J=J,
                    N=N,
                    estimator=estimator,
                    failure=f'{type(exception).__name__}: {exception}',
                ),
            )
            continue
        if not converged:
            records.append(
                ReplicationRecord(
                    **base,
                    J=J,
                    N=N,
                    estimator=estimator,
                    converged=False,
                    iterations=iterations,
                    method=method,
                    failure=f'solver did not converge, best iterate {list(estimate)}',
                ),
            )
            continue
        records.append(
            ReplicationRecord(
                **base,
                J=J,
                N=N,
                estimator=estimator,
                estimate=estimate,
                error=float(np.linalg.norm(np.subtract(truth.A, estimate))),
                iterations=iterations,
                method=method,
            ),
        )
    logger.debug(
        'Replication done',
        extra={**base, 'n_records': len(records)},
    )
    return tuple(records)


async def _run_jobs(
    cfg: ExperimentConfig,
    truth: Truth,
    threads: int,
    dispatch: Callable[[ExperimentReportReplicationAction], object],
) -> None:
    with ThreadPoolExecutor(
        max_workers=max(1, threads),
        thread_name_prefix='replication',
    ) as executor:
        futures = [
            run_in_executor(
                executor,
                run_replication,
                cfg,
                truth,
                delta_index,
                replication,
            )
            for delta_index in range(len(cfg.deltas))
            for replication in range(cfg.n_rep)
        ]
        await for_each_completed(
            futures,
            lambda records: dispatch(
                ExperimentReportReplicationAction(records=records),
            ),
        )


def _log_flagged(event: ExperimentGridPointFlaggedEvent) -> None:
    logger.warning(
        'Grid point has a majority of failed replications',
        extra={
            'delta': event.summary.delta,
            'J': event.summary.J,
            'N': event.summary.N,
            'estimator': event.summary.estimator,
            'n_fail': event.summary.n_fail,
            'n_rep': event.summary.n_rep,
        },
    )


def run_experiment(
    cfg: ExperimentConfig,
    *,
    threads: int = THREADS,
    out_dir: Path | None = None,
) -> ExperimentResult:
    """Run every replication of every grid point and aggregate the estimates."""
    truth = homogenized_truth(cfg)
    deltas = cfg.delta_values()
    fine_steps = tuple(fine_step(cfg, delta) for delta in deltas)
    for delta in deltas:
        prefix_grid(cfg, observation_count(cfg, delta))
    config_hash = cfg.config_hash()
    logger.info(
        'Starting experiment',
        extra={
            'name': cfg.name,
            'config_hash': config_hash,
            'deltas': deltas,
            'fine_steps': fine_steps,
            'n_rep': cfg.n_rep,
            'threads': threads,
            'A': truth.A,
        },
    )

    store = create_experiment_store()
    latest: list[ExperimentState] = []
    store.subscribe(latest.append)
    store.subscribe_event(ExperimentGridPointFlaggedEvent, _log_flagged)
    try:
        store.dispatch(
            ExperimentStartAction(
                config_hash=config_hash,
                n_jobs=len(deltas) * cfg.n_rep,
            ),
        )
        asyncio.run(
            _run_jobs(cfg, truth, threads, store.dispatch),
        )
        store.dispatch(ExperimentCompleteAction())
    finally:
        store.dispatch(FinishAction())

    state = latest[-1]
    result = ExperimentResult(
        config=cfg,
        config_hash=config_hash,
        truth=truth,
        fine_steps=fine_steps,
        records=state.records,
        summaries=state.summaries,
        provenance=Provenance(code_version=code_version(), created=_now()),
    )
    logger.info(
        'Finished experiment',
        extra={
            'config_hash': config_hash,
            'records': len(result.records),
            'flagged': result.flagged,
        },
    )
    if out_dir is not None:
        write_result(result, out_dir)
    return result


def _final_rows(result: ExperimentResult) -> pd.DataFrame:
    frame = summaries_frame(result.summaries)
    largest = frame.groupby('delta_index')['N'].transform('max')
    return frame[frame['N'] == largest].reset_index(drop=True)


def sweep_zeta(
    cfg: ExperimentConfig,
    zetas: list[float],
    *,
    threads: int = THREADS,
    out_dir: Path | None = None,
) -> pd.DataFrame:
    """Estimates against `zeta`, `delta = epsilon**zeta`, at the largest `N` of each."""
    if not zetas:
        msg = 'the zeta sweep needs at least one value'
        raise ConfigError(msg)
    swept = cfg.replace(
        name=f'{cfg.name}-zeta',
        delta_kind=DeltaKind.ZETA,
        deltas=tuple(float(zeta) for zeta in zetas),
    )
    table = _final_rows(run_experiment(swept, threads=threads, out_dir=out_dir))
    if out_dir is not None:
        stem = f'{swept.name}-{swept.config_hash()[:12]}'
        write_table(table, out_dir / f'{stem}-table.csv')
    return table


def sweep_J(  # noqa: N802
    cfg: ExperimentConfig,
    Js: list[int],
    *,
    threads: int = THREADS,
    out_dir: Path | None = None,
) -> pd.DataFrame:
    """Estimates against the number of eigenpairs, one path per replication."""
    if not Js:
        msg = 'the J sweep needs at least one value'
        raise ConfigError(msg)
    swept = cfg.replace(name=f'{cfg.name}-J', J=tuple(int(J) for J in Js))
    table = _final_rows(run_experiment(swept, threads=threads, out_dir=out_dir))
    if out_dir is not None:
        stem = f'{swept.name}-{swept.config_hash()[:12]}'
        write_table(table, out_dir / f'{stem}-table.csv')
    return table


BISTABLE_EPSILONS = (0.1, 0.05)


def bistable_protocol(
    cfg: ExperimentConfig,
    *,
    epsilons: tuple[float, ...] = BISTABLE_EPSILONS,
    threads: int = THREADS,
    out_dir: Path | None = None,
) -> pd.DataFrame:
    """Error of the two-parameter bistable estimate against `N` for each `epsilon`.

    Replication count, seed, fine-step rule and mesh settings come from `cfg`.
    """
    frames = []
    for epsilon in epsilons:
        protocol = cfg.replace(
            name=f'{cfg.name}-bistable',
            model_kind=ModelKind.MULTISCALE,
            slow='bistable',
            fast='cos',
            period=2 * math.pi,
            alpha=(1.2, 0.7),
            sigma=0.7,
            epsilon=epsilon,
            T=1000.0,
            delta_kind=DeltaKind.ABSOLUTE,
            deltas=(1.0,),
            J=(1,),
            beta='list:x^3,x',
            a0=None,
            N=tuple(range(100, 1001, 100)),
            estimators=(EstimatorKind.HAT,),
        )
        result = run_experiment(protocol, threads=threads, out_dir=out_dir)
        frame = summaries_frame(result.summaries)
        frame.insert(0, 'epsilon', epsilon)
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True)
    if out_dir is not None:
        stem = f'{cfg.name}-bistable-{cfg.config_hash()[:12]}'
        write_table(table, out_dir / f'{stem}.csv')
    return table
