# ruff: noqa: D100, D101, D102, D103, D104, D107
from __future__ import annotations

from typing import TYPE_CHECKING

from immutable import Immutable

if TYPE_CHECKING:
    from homodrift.harness.config import ExperimentConfig
    from homodrift.store.experiment import GridPointSummary, ReplicationRecord


class Truth(Immutable):
    """Homogenized coefficients the estimates are compared against."""

    A: tuple[float, ...]
    Sigma: float
    K: float


class Provenance(Immutable):
    code_version: str
    created: str


class ExperimentResult(Immutable):
    config: ExperimentConfig
    config_hash: str
    truth: Truth
    fine_steps: tuple[float, ...]
    records: tuple[ReplicationRecord, ...]
    summaries: tuple[GridPointSummary, ...]
    provenance: Provenance

    @property
    def flagged(self: ExperimentResult) -> bool:
        return any(summary.flagged for summary in self.summaries)
