# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

import argparse
import json
import sys
import threading
import traceback
from pathlib import Path
from typing import TYPE_CHECKING

import sentry_sdk

if TYPE_CHECKING:
    from types import TracebackType

    from homodrift.harness.config import ExperimentConfig

EXIT_FLAGGED = 1
EXIT_ERROR = 2


def setup_logging(log_level: str | None = None) -> None:
    from homodrift.constants import LOG_FILE, LOG_LEVEL

    log_level = log_level or LOG_LEVEL
    if log_level:
        import logging

        import homodrift.logging

        level = getattr(
            homodrift.logging,
            log_level.upper(),
            getattr(logging, log_level.upper(), logging.INFO),
        )

        homodrift.logging.logger.setLevel(level)
        homodrift.logging.add_stream_handler(homodrift.logging.logger, level)
        if LOG_FILE:
            homodrift.logging.add_file_handler(homodrift.logging.logger, level)


def setup_sentry() -> None:  # pragma: no cover
    from homodrift.constants import SENTRY_DSN

    if SENTRY_DSN:
        sentry_sdk.init(
            dsn=SENTRY_DSN,
            traces_sample_rate=1.0,
        )


def get_all_thread_stacks() -> dict[str, list[str]]:
    id_to_name = {th.ident: th.name for th in threading.enumerate()}
    thread_stacks = {}
    for thread_id, frame in sys._current_frames().items():  # noqa: SLF001
        thread_stacks[id_to_name.get(thread_id, f'unknown-{thread_id}')] = (
            traceback.format_stack(frame)
        )
    return thread_stacks


def global_exception_handler(
    exception_type: type[BaseException],
    exception_value: BaseException,
    exception_traceback: TracebackType,
) -> None:
    from homodrift.logging import logger

    error_message = ''.join(
        traceback.format_exception(
            exception_type,
            exception_value,
            exception_traceback,
        ),
    )
    threads_info = get_all_thread_stacks()

    logger.error(
        f'Uncaught exception: {exception_type}: {exception_value}\n{error_message}',
    )
    logger.debug(
        f'Uncaught exception: {exception_type}: {exception_value}\n{error_message}',
        extra={'threads': threads_info},
    )


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(item) for item in value.split(',') if item.strip())


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(item) for item in value.split(',') if item.strip())


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    from homodrift.harness.output import atomic_write_text

    atomic_write_text(out, text)


def _emit(payload: dict[str, object], out: Path | None) -> None:
    _write(json.dumps(payload, sort_keys=True, indent=2, default=str) + '\n', out)


def _add_model_arguments(
    parser: argparse.ArgumentParser,
    *,
    defaults: bool = True,
) -> None:
    """Model flags; without `defaults` unset flags stay `None` for config overrides."""

    def default(value: object) -> object:
        return value if defaults else None

    parser.add_argument(
        '--slow',
        default=default('quadratic'),
        help='quadratic, quartic, sextic, bistable or poly:[c0,c1,...]',
    )
    parser.add_argument('--fast', default=default('cos'), choices=('cos', 'zero'))
    parser.add_argument('--period', type=float, default=None)
    parser.add_argument('--alpha', type=_floats, default=default((1.0,)))
    parser.add_argument('--sigma', type=float, default=default(1.0))
    parser.add_argument('--epsilon', type=float, default=default(0.1))


def _homogenize(args: argparse.Namespace) -> int:
    from homodrift.homogenize import homogenize_model
    from homodrift.potentials import FastPotential, MultiscaleModel, SlowPotential

    model = MultiscaleModel(
        alpha=args.alpha,
        sigma=args.sigma,
        epsilon=args.epsilon,
        slow=SlowPotential.from_spec(args.slow),
        fast=FastPotential.from_spec(args.fast, args.period),
    )
    _, result = homogenize_model(model, args.n_quad)
    _emit(
        {
            'K': result.K,
            'C_sigma': result.C_sigma,
            'C_hat_sigma': result.C_hat_sigma,
            'A': list(result.A),
            'Sigma': result.Sigma,
        },
        args.out,
    )
    return 0


def _simulation_config(args: argparse.Namespace) -> ExperimentConfig:
    from homodrift.harness.config import ExperimentConfig, ModelKind, load_config

    cfg = ExperimentConfig() if args.config is None else load_config(args.config)
    overrides = {
        'model_kind': None if args.model is None else ModelKind(args.model),
        'slow': args.slow,
        'fast': args.fast,
        'period': args.period,
        'alpha': args.alpha,
        'sigma': args.sigma,
        'epsilon': args.epsilon,
        'theta': args.theta,
        'd': args.d,
        'T': args.T,
        'h': args.h,
        'h_rule': args.h_rule,
        'allow_coarse_step': args.allow_coarse_step or None,
    }
    return cfg.replace(
        **{field: value for field, value in overrides.items() if value is not None},
    )


def _simulate(args: argparse.Namespace) -> int:
    from homodrift.harness.output import write_observations
    from homodrift.harness.runner import build_model, fine_step
    from homodrift.logging import logger
    from homodrift.simulate import simulate_observations

    cfg = _simulation_config(args)
    delta = args.delta if args.delta is not None else cfg.epsilon**args.delta_exp
    h = fine_step(cfg, delta)
    seed = cfg.master_seed if args.seed is None else args.seed
    logger.info(
        'Simulating observations',
        extra={'model': str(cfg.model_kind), 'T': cfg.T, 'delta': delta, 'seed': seed},
    )
    obs = simulate_observations(build_model(cfg), cfg.T, delta, h, seed)
    write_observations(obs, args.out)
    return 0


def _filter(args: argparse.Namespace) -> int:
    from homodrift.harness.output import read_observations, write_observations

    write_observations(read_observations(args.obs, args.delta).filtered(), args.out)
    return 0


def _spectrum(args: argparse.Namespace) -> int:
    import pandas as pd

    from homodrift.constants import DEFAULT_H_TARGET, DEFAULT_R_FLOOR
    from homodrift.harness.config import load_config
    from homodrift.harness.runner import homogenized_truth
    from homodrift.potentials import SlowPotential
    from homodrift.spectral import (
        assemble,
        build_mesh,
        ou_eigen_analytic,
        solve_eigenpairs,
    )

    a, Sigma = args.a or (1.0,), args.Sigma or 1.0
    slow = SlowPotential.from_spec(args.slow or 'quadratic')
    h_target, R_floor = DEFAULT_H_TARGET, DEFAULT_R_FLOOR
    if args.config is not None:
        cfg = load_config(args.config)
        truth = homogenized_truth(cfg)
        a, Sigma = args.a or truth.A, args.Sigma or truth.Sigma
        slow = SlowPotential.from_spec(args.slow or cfg.slow)
        h_target, R_floor = cfg.h_target, cfg.R_floor
    mesh = build_mesh(None, args.h or h_target, args.R_floor or R_floor)
    if args.analytic:
        basis = ou_eigen_analytic(a[0], Sigma, args.J)
    else:
        basis = solve_eigenpairs(assemble(mesh, a, Sigma, slow), args.J)

    nodes = mesh.nodes
    frame = pd.concat(
        [
            pd.DataFrame(
                {
                    'j': j,
                    'lambda': basis.lambdas[j - 1],
                    'x': nodes,
                    'phi': basis.evaluate(j, nodes),
                },
            )
            for j in range(1, args.J + 1)
        ],
        ignore_index=True,
    )
    _write(frame.to_csv(index=False, lineterminator='\n'), args.out)
    return 0


def _estimate(args: argparse.Namespace) -> int:
    from homodrift.estimate import (
        BasisKind,
        BetaFamily,
        make_score_context,
        solve_estimator,
    )
    from homodrift.harness.output import read_observations
    from homodrift.potentials import SlowPotential

    obs = read_observations(args.obs)
    slow = SlowPotential.from_spec(args.slow)
    ctx = make_score_context(
        obs,
        args.J,
        BetaFamily.from_spec(args.beta, slow.m, args.J),
        args.sigma_known,
        slow,
        use_filter=args.filtered,
        basis_kind=BasisKind(args.basis),
        h_target=args.h_target,
    )
    result = solve_estimator(ctx, args.a0)
    _emit(
        {
            'a_hat': list(result.a_hat),
            'score_norm': result.score_norm,
            'iterations': result.iterations,
            'converged': result.converged,
            'method': result.method,
            'lambda_at_solution': list(result.lambda_at_solution),
            'filtered': args.filtered,
            'J': args.J,
            'beta': args.beta,
            'mesh': {'R': ctx.mesh.R, 'n_elems': ctx.mesh.n_elems},
            'n_observations': obs.n,
            'delta': obs.delta,
            'seeds': {'observations': obs.seed},
        },
        args.out,
    )
    return 0 if result.converged else EXIT_FLAGGED


def _experiment(args: argparse.Namespace) -> int:
    from homodrift.harness.config import load_config
    from homodrift.harness.runner import (
        bistable_protocol,
        run_experiment,
        sweep_J,
        sweep_zeta,
    )

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    options = {'threads': args.threads, 'out_dir': args.out_dir}
    if args.protocol == 'zeta':
        table = sweep_zeta(cfg, list(args.zetas or cfg.deltas), **options)
        flagged = bool(table['flagged'].any())
    elif args.protocol == 'J':
        table = sweep_J(cfg, list(args.Js or cfg.J), **options)
        flagged = bool(table['flagged'].any())
    elif args.protocol == 'bistable':
        table = bistable_protocol(cfg, **options)
        flagged = bool(table['flagged'].any())
    else:
        flagged = run_experiment(cfg, **options).flagged
    return EXIT_FLAGGED if flagged else 0


def build_parser() -> argparse.ArgumentParser:
    from homodrift.constants import DEFAULT_H_TARGET, DEFAULT_N_QUAD, OUT_DIR, THREADS

    parser = argparse.ArgumentParser(
        prog='homodrift',
        description='Homogenized drift estimation from multiscale observations.',
    )
    parser.add_argument('--log-level', default=None)
    parser.add_argument('--seed', type=int, default=None)
    parser.add_argument('--threads', type=int, default=THREADS)
    parser.add_argument('--out-dir', type=Path, default=OUT_DIR)
    commands = parser.add_subparsers(dest='command', required=True)

    homogenize = commands.add_parser(
        'homogenize',
        help='effective coefficients K, A and Sigma',
    )
    _add_model_arguments(homogenize)
    homogenize.add_argument('--n-quad', type=int, default=DEFAULT_N_QUAD)
    homogenize.add_argument('--out', type=Path, default=None)
    homogenize.set_defaults(handler=_homogenize)

    simulate = commands.add_parser('simulate', help='simulate and subsample a path')
    simulate.add_argument('--config', type=Path, default=None)
    _add_model_arguments(simulate, defaults=False)
    simulate.add_argument(
        '--model',
        default=None,
        choices=('multiscale', 'homogenized', 'particles'),
    )
    simulate.add_argument('--theta', type=float, default=None)
    simulate.add_argument('--d', type=int, default=None)
    simulate.add_argument('--T', type=float, default=None)
    spacing = simulate.add_mutually_exclusive_group(required=True)
    spacing.add_argument('--delta', type=float, default=None)
    spacing.add_argument(
        '--delta-exp',
        type=float,
        default=None,
        help='observe every epsilon**zeta',
    )
    simulate.add_argument('--h', type=float, default=None)
    simulate.add_argument('--h-rule', default=None, choices=('eps3', 'min'))
    simulate.add_argument('--allow-coarse-step', action='store_true')
    simulate.add_argument('--seed', type=int, default=argparse.SUPPRESS)
    simulate.add_argument('--out', type=Path, required=True)
    simulate.set_defaults(handler=_simulate)

    filter_ = commands.add_parser('filter', help='add exponentially filtered columns')
    filter_.add_argument('--in', '--obs', dest='obs', type=Path, required=True)
    filter_.add_argument(
        '--delta',
        type=float,
        default=None,
        help='observation spacing, checked against the t column when present',
    )
    filter_.add_argument('--out', type=Path, required=True)
    filter_.set_defaults(handler=_filter)

    spectrum = commands.add_parser(
        'spectrum',
        help='eigenvalues and nodal eigenfunctions of the homogenized generator',
    )
    spectrum.add_argument('--config', type=Path, default=None)
    spectrum.add_argument('--slow', default=None)
    spectrum.add_argument('--a', type=_floats, default=None)
    spectrum.add_argument('--Sigma', type=float, default=None)
    spectrum.add_argument('--J', type=int, default=3)
    spectrum.add_argument('--h', '--h-target', dest='h', type=float, default=None)
    spectrum.add_argument('--R-floor', type=float, default=None)
    spectrum.add_argument('--analytic', action='store_true')
    spectrum.add_argument('--out', type=Path, default=None)
    spectrum.set_defaults(handler=_spectrum)

    estimate = commands.add_parser('estimate', help='solve the estimating equation')
    estimate.add_argument('--obs', type=Path, required=True)
    estimate.add_argument('--filtered', action='store_true')
    estimate.add_argument('--J', type=int, default=1)
    estimate.add_argument('--beta', default='identity')
    estimate.add_argument('--sigma-known', type=float, required=True)
    estimate.add_argument('--slow', default='quadratic')
    estimate.add_argument(
        '--basis',
        default='auto',
        choices=('auto', 'fem', 'analytic'),
    )
    estimate.add_argument('--a0', type=_floats, default=None)
    estimate.add_argument('--h-target', type=float, default=DEFAULT_H_TARGET)
    estimate.add_argument('--out', type=Path, default=None)
    estimate.set_defaults(handler=_estimate)

    experiment = commands.add_parser('experiment', help='run a configured experiment')
    experiment.add_argument('--config', type=Path, required=True)
    experiment.add_argument(
        '--protocol',
        default='run',
        choices=('run', 'zeta', 'J', 'bistable'),
    )
    experiment.add_argument('--zetas', type=_floats, default=None)
    experiment.add_argument('--Js', type=_ints, default=None)
    experiment.add_argument('--seed', type=int, default=argparse.SUPPRESS)
    experiment.set_defaults(handler=_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Parse the command line and run one subcommand."""
    args = build_parser().parse_args(argv)

    setup_sentry()
    setup_logging(args.log_level)

    sys.excepthook = global_exception_handler
    threading.excepthook = lambda hook_args: global_exception_handler(
        hook_args.exc_type,
        hook_args.exc_value or hook_args.exc_type(),
        hook_args.exc_traceback,  # pyright: ignore [reportArgumentType]
    )

    from homodrift.exceptions import HomodriftError
    from homodrift.logging import logger

    try:
        return args.handler(args)
    except HomodriftError as exception:
        logger.error(
            'Command failed',
            extra={'command': args.command, 'error': str(exception)},
        )
        sys.stderr.write(f'homodrift {args.command}: {exception}\n')
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
