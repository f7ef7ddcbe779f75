# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

from enum import StrEnum, auto
from typing import TYPE_CHECKING

from immutable import Immutable
from redux import BaseAction, BaseEvent, FinishAction, InitAction

if TYPE_CHECKING:
    from typing_extensions import TypeAlias


class ExperimentStatus(StrEnum):
    IDLE = auto()
    RUNNING = auto()
    COMPLETE = auto()


class ReplicationRecord(Immutable):
    """One estimator evaluated on one replication at one grid point."""

    delta_index: int
    delta: float
    zeta: float | None
    J: int
    N: int
    estimator: str
    replication: int
    seed: int
    h: float
    estimate: tuple[float, ...] | None = None
    error: float | None = None
    converged: bool = True
    iterations: int = 0
    method: str = 'closed_form'
    failure: str | None = None

    @property
    def failed(self: ReplicationRecord) -> bool:
        return self.estimate is None

    @property
    def grid_key(self: ReplicationRecord) -> tuple[int, int, int, str]:
        return (self.delta_index, self.J, self.N, self.estimator)

    @property
    def sort_key(self: ReplicationRecord) -> tuple[int, int, int, str, int]:
        return (*self.grid_key, self.replication)


class GridPointSummary(Immutable):
    delta_index: int
    delta: float
    zeta: float | None
    J: int
    N: int
    estimator: str
    mean: tuple[float, ...]
    std: tuple[float, ...]
    error_mean: float
    error_median: float
    n_rep: int
    n_fail: int
    flagged: bool


class ExperimentState(Immutable):
    status: ExperimentStatus = ExperimentStatus.IDLE
    config_hash: str | None = None
    n_jobs: int = 0
    n_done: int = 0
    records: tuple[ReplicationRecord, ...] = ()
    summaries: tuple[GridPointSummary, ...] = ()


class ExperimentAction(BaseAction): ...


class ExperimentStartAction(ExperimentAction):
    config_hash: str
    n_jobs: int


class ExperimentReportReplicationAction(ExperimentAction):
    records: tuple[ReplicationRecord, ...]


class ExperimentCompleteAction(ExperimentAction): ...


class ExperimentEvent(BaseEvent): ...


class ExperimentGridPointFlaggedEvent(ExperimentEvent):
    summary: GridPointSummary


class ExperimentFinishedEvent(ExperimentEvent):
    config_hash: str | None
    summaries: tuple[GridPointSummary, ...]


ExperimentStoreAction: TypeAlias = InitAction | FinishAction | ExperimentAction
