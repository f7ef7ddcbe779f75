# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

from redux import CreateStoreOptions, InitAction, Store

from homodrift.logging import logger
from homodrift.store.experiment import (
    ExperimentEvent,
    ExperimentState,
    ExperimentStoreAction,
)
from homodrift.store.experiment.reducer import reducer

ExperimentStore = Store[ExperimentState, ExperimentStoreAction, ExperimentEvent]


def create_experiment_store() -> ExperimentStore:
    """Single-writer store collecting the replications of one experiment run."""
    store = ExperimentStore(
        reducer,
        CreateStoreOptions(
            auto_init=False,
            action_middlewares=[
                lambda action: logger.verbose(
                    'Action dispatched',
                    extra={'action': type(action).__name__},
                )
                or action,
            ],
            event_middlewares=[
                lambda event: logger.debug(
                    'Event dispatched',
                    extra={'event': event},
                )
                or event,
            ],
        ),
    )
    store.dispatch(InitAction())
    return store
