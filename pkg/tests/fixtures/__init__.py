"""Utility fixtures for testing homodrift."""

from .experiment import ConfigFactory, experiment_config, out_dir
from .observations import OUSampler, ou_observations, ou_sample, ou_sampler

__all__ = (
    'ConfigFactory',
    'OUSampler',
    'experiment_config',
    'ou_observations',
    'ou_sample',
    'ou_sampler',
    'out_dir',
)
