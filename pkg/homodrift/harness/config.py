"""Experiment configuration read from plain `key = value` files."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, replace
from enum import StrEnum, auto
from typing import TYPE_CHECKING, Any, Callable

import dotenv
from immutable import Immutable

from homodrift.constants import (
    DEFAULT_H_TARGET,
    DEFAULT_MASTER_SEED,
    DEFAULT_N_QUAD,
    DEFAULT_N_REP,
    DEFAULT_R_FLOOR,
    DESK_SCALE_T,
    FULL_SCALE,
    FULL_SCALE_T,
)
from homodrift.estimate import BasisKind, BetaFamily
from homodrift.exceptions import ConfigError
from homodrift.potentials import FastPotential, SlowKind, SlowPotential

if TYPE_CHECKING:
    from collections.abc import Mapping
    from pathlib import Path


class ModelKind(StrEnum):
    MULTISCALE = auto()
    HOMOGENIZED = auto()
    PARTICLES = auto()


class DeltaKind(StrEnum):
    ABSOLUTE = auto()
    ZETA = auto()
    DYADIC = auto()


class EstimatorKind(StrEnum):
    HAT = auto()
    TILDE = auto()
    MLE_HAT = auto()
    MLE_TILDE = auto()
    CLOSED_FORM_HAT = auto()
    CLOSED_FORM_TILDE = auto()

    @property
    def generic(self: EstimatorKind) -> bool:
        return self in (EstimatorKind.HAT, EstimatorKind.TILDE)

    @property
    def filtered(self: EstimatorKind) -> bool:
        return self in (
            EstimatorKind.TILDE,
            EstimatorKind.MLE_TILDE,
            EstimatorKind.CLOSED_FORM_TILDE,
        )


class ExperimentConfig(Immutable):
    name: str = 'experiment'
    model_kind: ModelKind = ModelKind.MULTISCALE
    slow: str = 'quadratic'
    fast: str = 'cos'
    period: float = 2 * math.pi
    alpha: tuple[float, ...] = (1.0,)
    sigma: float = 1.0
    epsilon: float = 0.1
    theta: float = 1.0
    d: int = 2
    T: float = FULL_SCALE_T if FULL_SCALE else DESK_SCALE_T
    h: float | None = None
    h_rule: str = 'eps3'
    allow_coarse_step: bool = False
    delta_kind: DeltaKind = DeltaKind.ABSOLUTE
    deltas: tuple[float, ...] = (1.0,)
    J: tuple[int, ...] = (1,)
    beta: str = 'identity'
    basis: BasisKind = BasisKind.AUTO
    a0: tuple[float, ...] | None = None
    N: tuple[int, ...] | None = None
    estimators: tuple[EstimatorKind, ...] = (EstimatorKind.HAT,)
    n_rep: int = DEFAULT_N_REP
    master_seed: int = DEFAULT_MASTER_SEED
    h_target: float = DEFAULT_H_TARGET
    R_floor: float = DEFAULT_R_FLOOR
    n_quad: int = DEFAULT_N_QUAD

    def __post_init__(self: ExperimentConfig) -> None:
        if self.n_rep < 1:
            msg = f'n_rep must be at least 1, got {self.n_rep}'
            raise ConfigError(msg)
        for key in ('deltas', 'J', 'estimators', 'alpha'):
            if not getattr(self, key):
                msg = f'{key} must not be empty'
                raise ConfigError(msg)
        if self.N is not None and (not self.N or min(self.N) < 1):
            msg = f'N grid must hold positive integers, got {self.N}'
            raise ConfigError(msg)
        if min(self.J) < 1:
            msg = f'J values must be positive, got {self.J}'
            raise ConfigError(msg)
        if not self.T > 0:
            msg = f'T must be positive, got {self.T}'
            raise ConfigError(msg)
        if self.h_rule not in ('eps3', 'min'):
            msg = f'h_rule must be eps3 or min, got {self.h_rule!r}'
            raise ConfigError(msg)
        if self.model_kind == ModelKind.PARTICLES:
            if len(self.alpha) != 1:
                msg = 'the particle model takes a scalar alpha'
                raise ConfigError(msg)
            unsupported = [
                estimator
                for estimator in self.estimators
                if estimator in (EstimatorKind.MLE_HAT, EstimatorKind.MLE_TILDE)
            ]
            if unsupported:
                msg = f'estimators {unsupported} are not defined for particles'
                raise ConfigError(msg)
        slow = self.slow_potential
        closed_forms = [
            estimator for estimator in self.estimators if not estimator.generic
        ]
        if (
            self.model_kind != ModelKind.PARTICLES
            and closed_forms
            and slow.kind != SlowKind.QUADRATIC
        ):
            msg = f'estimators {closed_forms} need the quadratic slow potential'
            raise ConfigError(msg)
        if len(self.alpha) != slow.m:
            msg = f'alpha has {len(self.alpha)} components, the potential has {slow.m}'
            raise ConfigError(msg)
        for J in self.J:
            BetaFamily.from_spec(self.beta, slow.m, J)
        self.fast_potential  # noqa: B018

    @property
    def slow_potential(self: ExperimentConfig) -> SlowPotential:
        return SlowPotential.from_spec(self.slow)

    @property
    def fast_potential(self: ExperimentConfig) -> FastPotential:
        return FastPotential.from_spec(self.fast, self.period)

    def delta_values(self: ExperimentConfig) -> tuple[float, ...]:
        if self.delta_kind == DeltaKind.ZETA:
            return tuple(self.epsilon**zeta for zeta in self.deltas)
        if self.delta_kind == DeltaKind.DYADIC:
            return tuple(2.0**zeta for zeta in self.deltas)
        return self.deltas

    def zeta_of(self: ExperimentConfig, index: int) -> float | None:
        return None if self.delta_kind == DeltaKind.ABSOLUTE else self.deltas[index]

    def canonical(self: ExperimentConfig) -> dict[str, Any]:
        return {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in asdict(self).items()
        }

    def config_hash(self: ExperimentConfig) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode()).hexdigest()

    def replace(self: ExperimentConfig, **changes: object) -> ExperimentConfig:
        return replace(self, **changes)


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(item) for item in value.split(',') if item.strip())


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(item) for item in value.split(',') if item.strip())


def _bool(value: str) -> bool:
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


def _optional(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def optional(value: str) -> Any:  # noqa: ANN401
        if value.strip().lower() in ('', 'none', 'auto'):
            return None
        return parse(value)

    return optional


_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    'experiment.name': ('name', str.strip),
    'experiment.n_rep': ('n_rep', int),
    'experiment.master_seed': ('master_seed', int),
    'model.kind': ('model_kind', ModelKind),
    'model.alpha': ('alpha', _floats),
    'model.sigma': ('sigma', float),
    'model.epsilon': ('epsilon', float),
    'model.theta': ('theta', float),
    'model.d': ('d', int),
    'potential.slow': ('slow', str.strip),
    'potential.fast': ('fast', str.strip),
    'potential.period': ('period', float),
    'simulate.T': ('T', float),
    'simulate.h': ('h', _optional(float)),
    'simulate.h_rule': ('h_rule', str.strip),
    'simulate.allow_coarse_step': ('allow_coarse_step', _bool),
    'delta.kind': ('delta_kind', DeltaKind),
    'delta.values': ('deltas', _floats),
    'estimate.J': ('J', _ints),
    'estimate.beta': ('beta', str.strip),
    'estimate.basis': ('basis', BasisKind),
    'estimate.a0': ('a0', _optional(_floats)),
    'estimate.N': ('N', _optional(_ints)),
    'estimate.estimators': ('estimators', lambda value: _estimators(value)),
    'mesh.h_target': ('h_target', float),
    'mesh.R_floor': ('R_floor', float),
    'homogenize.n_quad': ('n_quad', int),
}

_DELTA_SHORTCUTS = {
    'delta.absolute': DeltaKind.ABSOLUTE,
    'delta.zeta': DeltaKind.ZETA,
    'delta.dyadic': DeltaKind.DYADIC,
}


def _estimators(value: str) -> tuple[EstimatorKind, ...]:
    estimators: list[EstimatorKind] = []
    for item in (item.strip() for item in value.split(',') if item.strip()):
        if item == 'closed_form':
            estimators.extend(
                (EstimatorKind.CLOSED_FORM_HAT, EstimatorKind.CLOSED_FORM_TILDE),
            )
        else:
            estimators.append(EstimatorKind(item))
    return tuple(dict.fromkeys(estimators))


def config_from_mapping(values: Mapping[str, str | None]) -> ExperimentConfig:
    """Build a config from `section.key` entries, rejecting unknown keys."""
    fields: dict[str, Any] = {}
    for key, raw in values.items():
        if raw is None:
            msg = f'key {key!r} has no value'
            raise ConfigError(msg)
        value = raw.strip()
        try:
            if key in _DELTA_SHORTCUTS:
                fields['delta_kind'] = _DELTA_SHORTCUTS[key]
                fields['deltas'] = _floats(value)
            elif key in _KEYS:
                field, parse = _KEYS[key]
                fields[field] = parse(value)
            else:
                msg = f'unknown configuration key {key!r}'
                raise ConfigError(msg)
        except ValueError as exception:
            if isinstance(exception, ConfigError):
                raise
            msg = f'invalid value {value!r} for {key!r}'
            raise ConfigError(msg) from exception
    return ExperimentConfig(**fields)


def load_config(path: Path) -> ExperimentConfig:
    if not path.is_file():
        msg = f'configuration file {path} does not exist'
        raise ConfigError(msg)
    return config_from_mapping(dotenv.dotenv_values(path))
