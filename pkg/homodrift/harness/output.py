"""Flat-file results: JSON for a whole run, CSV for tables, written atomically."""

from __future__ import annotations

import json
import math
import re
import tempfile
from dataclasses import asdict
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from homodrift.exceptions import ConfigError, ResultMismatchError
from homodrift.harness.result import ExperimentResult, Provenance, Truth
from homodrift.logging import logger
from homodrift.simulate import ObservationSet
from homodrift.store.experiment import ReplicationRecord
from homodrift.store.experiment.utils import aggregate_records, sort_records

if TYPE_CHECKING:
    from collections.abc import Iterable

    from numpy.typing import NDArray

    from homodrift.harness.config import ExperimentConfig
    from homodrift.store.experiment import GridPointSummary

AGGREGATE_TOLERANCE = 1e-12
SEED_PREFIX = '# seed='
_COORDINATE = re.compile(r'^([xz])(\d*)$')


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(
        'w',
        dir=path.parent,
        prefix=f'.{path.name}.',
        delete=False,
        encoding='utf-8',
    ) as file:
        file.write(text)
    Path(file.name).replace(path)


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _spread(values: tuple[float, ...], name: str, width: int) -> dict[str, float]:
    if width <= 1:
        return {name: values[0] if values else math.nan}
    return {
        f'{name}_{index + 1}': values[index] if values else math.nan
        for index in range(width)
    }


def summaries_frame(summaries: Iterable[GridPointSummary]) -> pd.DataFrame:
    summaries = list(summaries)
    width = max((len(summary.mean) for summary in summaries), default=1)
    rows = [
        {
            'delta_index': summary.delta_index,
            'delta': summary.delta,
            'zeta': summary.zeta,
            'J': summary.J,
            'N': summary.N,
            'estimator': str(summary.estimator),
            **_spread(summary.mean, 'mean', width),
            **_spread(summary.std, 'std', width),
            'error_mean': summary.error_mean,
            'error_median': summary.error_median,
            'n_rep': summary.n_rep,
            'n_fail': summary.n_fail,
            'flagged': summary.flagged,
        }
        for summary in summaries
    ]
    return pd.DataFrame(rows)


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    atomic_write_text(path, frame.to_csv(index=False, lineterminator='\n'))
    logger.info('Wrote table', extra={'path': path.as_posix(), 'rows': len(frame)})
    return path


def _record_payload(record: ReplicationRecord) -> dict[str, Any]:
    payload = asdict(record)
    payload['estimator'] = str(record.estimator)
    return payload


def _summary_payload(summary: GridPointSummary) -> dict[str, Any]:
    payload = asdict(summary)
    payload['estimator'] = str(summary.estimator)
    payload['error_mean'] = _finite_or_none(summary.error_mean)
    payload['error_median'] = _finite_or_none(summary.error_median)
    return payload


def result_stem(result: ExperimentResult) -> str:
    return f'{result.config.name}-{result.config_hash[:12]}'


def write_result(result: ExperimentResult, out_dir: Path) -> tuple[Path, Path]:
    """Write every replication to `<name>-<hash>.json`, the summaries to `.csv`."""
    stem = result_stem(result)
    payload = {
        'config': result.config.canonical(),
        'config_hash': result.config_hash,
        'truth': asdict(result.truth),
        'fine_steps': list(result.fine_steps),
        'provenance': asdict(result.provenance),
        'records': [_record_payload(record) for record in result.records],
        'summaries': [_summary_payload(summary) for summary in result.summaries],
    }
    json_path = out_dir / f'{stem}.json'
    atomic_write_text(json_path, json.dumps(payload, sort_keys=True, indent=2) + '\n')
    csv_path = write_table(summaries_frame(result.summaries), out_dir / f'{stem}.csv')
    logger.info('Wrote result', extra={'path': json_path.as_posix()})
    return json_path, csv_path


def _load_record(payload: dict[str, Any]) -> ReplicationRecord:
    estimate = payload.get('estimate')
    return ReplicationRecord(
        **{
            **payload,
            'estimate': None if estimate is None else tuple(estimate),
        },
    )


def _same(stored: float | None, recomputed: float) -> bool:
    if stored is None:
        return math.isnan(recomputed)
    return math.isclose(
        stored,
        recomputed,
        rel_tol=AGGREGATE_TOLERANCE,
        abs_tol=AGGREGATE_TOLERANCE,
    )


def _same_all(stored: list[float | None], recomputed: tuple[float, ...]) -> bool:
    return len(stored) == len(recomputed) and all(
        _same(a, b) for a, b in zip(stored, recomputed, strict=True)
    )


def _check_summaries(
    stored: list[dict[str, Any]],
    recomputed: tuple[GridPointSummary, ...],
) -> None:
    if len(stored) != len(recomputed):
        msg = f'stored {len(stored)} grid points, replications give {len(recomputed)}'
        raise ResultMismatchError(msg)
    for payload, summary in zip(stored, recomputed, strict=True):
        consistent = (
            payload['n_fail'] == summary.n_fail
            and payload['n_rep'] == summary.n_rep
            and payload['flagged'] == summary.flagged
            and _same_all(payload['mean'], summary.mean)
            and _same_all(payload['std'], summary.std)
            and _same(payload['error_mean'], summary.error_mean)
            and _same(payload['error_median'], summary.error_median)
        )
        if not consistent:
            msg = (
                f'aggregates of grid point (J={summary.J}, N={summary.N}, '
                f'estimator={summary.estimator}) do not match the stored replications'
            )
            raise ResultMismatchError(msg)


def load_result(path: Path, cfg: ExperimentConfig) -> ExperimentResult:
    """Reload a result written for `cfg`, recomputing its aggregates."""
    payload = json.loads(path.read_text(encoding='utf-8'))
    expected = cfg.config_hash()
    if payload.get('config_hash') != expected:
        msg = (
            f'{path} was written for config {payload.get("config_hash")}, '
            f'not {expected}'
        )
        raise ResultMismatchError(msg)
    records = sort_records(_load_record(record) for record in payload['records'])
    summaries = aggregate_records(records)
    _check_summaries(payload['summaries'], summaries)
    return ExperimentResult(
        config=cfg,
        config_hash=expected,
        truth=Truth(**{**payload['truth'], 'A': tuple(payload['truth']['A'])}),
        fine_steps=tuple(payload['fine_steps']),
        records=records,
        summaries=summaries,
        provenance=Provenance(**payload['provenance']),
    )


def _coordinate_names(prefix: str, width: int) -> list[str]:
    return [prefix, *(f'{prefix}{index}' for index in range(2, width + 1))]


def write_observations(obs: ObservationSet, path: Path) -> Path:
    """CSV `n,t,x[,x2,...]`, with `z` columns when filtered.

    The seed of a simulated set goes to a leading `# seed=` comment line.
    """
    columns = obs.x.reshape(len(obs.x), -1)
    width = columns.shape[1]
    frame = pd.DataFrame(columns, columns=pd.Index(_coordinate_names('x', width)))
    if obs.z is not None:
        filtered = obs.z.reshape(len(obs.z), -1)
        for index, name in enumerate(_coordinate_names('z', width)):
            frame[name] = filtered[:, index]
    frame.insert(0, 't', obs.delta * np.arange(len(obs.x)))
    frame.insert(0, 'n', np.arange(len(obs.x)))
    text = frame.to_csv(index=False, lineterminator='\n')
    if obs.seed is not None:
        text = f'{SEED_PREFIX}{obs.seed}\n{text}'
    atomic_write_text(path, text)
    return path


def _read_seed(path: Path) -> int | None:
    with path.open(encoding='utf-8') as file:
        first = file.readline().strip()
    if not first.startswith(SEED_PREFIX):
        return None
    try:
        return int(first.removeprefix(SEED_PREFIX))
    except ValueError as exception:
        msg = f'{path} has an invalid seed line {first!r}'
        raise ConfigError(msg) from exception


def _spacing(path: Path, frame: pd.DataFrame, delta: float | None) -> float:
    if 't' not in frame:
        if delta is None:
            msg = f'{path} has no t column, the spacing must be given'
            raise ConfigError(msg)
        return delta
    steps = np.diff(frame['t'].to_numpy(dtype=float))
    spacing = float(steps.mean())
    if not np.allclose(steps, spacing, rtol=1e-9, atol=0):
        msg = f'{path} is not equally spaced in t'
        raise ConfigError(msg)
    if delta is not None and not math.isclose(delta, spacing, rel_tol=1e-9):
        msg = f'{path} is spaced by {spacing}, not by delta={delta}'
        raise ConfigError(msg)
    return spacing


def read_observations(path: Path, delta: float | None = None) -> ObservationSet:
    """Read `write_observations` output; `delta` is required without a t column."""
    if not path.is_file():
        msg = f'observation file {path} does not exist'
        raise ConfigError(msg)
    frame = pd.read_csv(path, comment='#')
    if len(frame) < 2:  # noqa: PLR2004
        msg = f'{path} needs at least two rows'
        raise ConfigError(msg)
    spacing = _spacing(path, frame, delta)
    indices: dict[str, list[int]] = {'x': [], 'z': []}
    for name in frame.columns:
        match = _COORDINATE.match(str(name))
        if match:
            indices[match[1]].append(int(match[2] or 1))
    width = len(indices['x'])
    if width == 0 or sorted(indices['x']) != list(range(1, width + 1)):
        expected = ','.join(_coordinate_names('x', max(width, 1)))
        msg = f'{path} needs the columns {expected}'
        raise ConfigError(msg)

    def columns(prefix: str) -> NDArray[np.float64]:
        values = frame[_coordinate_names(prefix, width)].to_numpy(dtype=float)
        return values[:, 0] if width == 1 else values

    z = columns('z') if sorted(indices['z']) == list(range(1, width + 1)) else None
    return ObservationSet(
        x=columns('x'),
        delta=spacing,
        z=z,
        seed=_read_seed(path),
    )
