# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

from itertools import groupby
from typing import TYPE_CHECKING

import numpy as np

from homodrift.constants import FAILURE_FLAG_RATIO
from homodrift.store.experiment import GridPointSummary, ReplicationRecord

if TYPE_CHECKING:
    from collections.abc import Iterable


def sort_records(records: Iterable[ReplicationRecord]) -> tuple[ReplicationRecord, ...]:
    return tuple(sorted(records, key=lambda record: record.sort_key))


def summarize(records: tuple[ReplicationRecord, ...]) -> GridPointSummary:
    """Aggregate the replications of a single grid point, failures included."""
    first = records[0]
    successes = [record for record in records if not record.failed]
    n_fail = len(records) - len(successes)
    if successes:
        estimates = np.array([record.estimate for record in successes], dtype=float)
        errors = np.array([record.error for record in successes], dtype=float)
        mean = tuple(float(value) for value in estimates.mean(axis=0))
        std = tuple(
            float(value)
            for value in (
                estimates.std(axis=0, ddof=1)
                if len(successes) > 1
                else np.zeros(estimates.shape[1])
            )
        )
        error_mean, error_median = float(errors.mean()), float(np.median(errors))
    else:
        mean = std = ()
        error_mean = error_median = float('nan')
    return GridPointSummary(
        delta_index=first.delta_index,
        delta=first.delta,
        zeta=first.zeta,
        J=first.J,
        N=first.N,
        estimator=first.estimator,
        mean=mean,
        std=std,
        error_mean=error_mean,
        error_median=error_median,
        n_rep=len(records),
        n_fail=n_fail,
        flagged=n_fail > FAILURE_FLAG_RATIO * len(records),
    )


def aggregate_records(
    records: Iterable[ReplicationRecord],
) -> tuple[GridPointSummary, ...]:
    ordered = sort_records(records)
    return tuple(
        summarize(tuple(group))
        for _, group in groupby(ordered, key=lambda record: record.grid_key)
    )
