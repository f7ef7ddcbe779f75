# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

from dataclasses import replace

from redux import (
    CompleteReducerResult,
    InitAction,
    InitializationActionError,
    ReducerResult,
)

from homodrift.store.experiment import (
    ExperimentAction,
    ExperimentCompleteAction,
    ExperimentEvent,
    ExperimentFinishedEvent,
    ExperimentGridPointFlaggedEvent,
    ExperimentReportReplicationAction,
    ExperimentStartAction,
    ExperimentState,
    ExperimentStatus,
)
from homodrift.store.experiment.utils import aggregate_records, sort_records


def reducer(
    state: ExperimentState | None,
    action: ExperimentAction | InitAction,
) -> ReducerResult[ExperimentState, None, ExperimentEvent]:
    if state is None:
        if isinstance(action, InitAction):
            return ExperimentState()
        raise InitializationActionError(action)

    if isinstance(action, ExperimentStartAction):
        return ExperimentState(
            status=ExperimentStatus.RUNNING,
            config_hash=action.config_hash,
            n_jobs=action.n_jobs,
        )

    if isinstance(action, ExperimentReportReplicationAction):
        return replace(
            state,
            n_done=state.n_done + 1,
            records=(*state.records, *action.records),
        )

    if isinstance(action, ExperimentCompleteAction):
        summaries = aggregate_records(state.records)
        return CompleteReducerResult(
            state=replace(
                state,
                status=ExperimentStatus.COMPLETE,
                records=sort_records(state.records),
                summaries=summaries,
            ),
            events=[
                *(
                    ExperimentGridPointFlaggedEvent(summary=summary)
                    for summary in summaries
                    if summary.flagged
                ),
                ExperimentFinishedEvent(
                    config_hash=state.config_hash,
                    summaries=summaries,
                ),
            ],
        )

    return state
