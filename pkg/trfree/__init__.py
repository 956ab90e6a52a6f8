"""
T^(r)-free process laboratory - Lab factory

This package simulates the random greedy T^(r)-free hypergraph process, measures its
observables against the predicted trajectories and probes the independence number
of its output. ``create_lab`` resolves the settings, configures logging and returns
a Lab that runs ensembles.
"""

import logging

from config import config_by_name, get_config_name

__version__ = "1.0.0"

_settings = None


def get_settings():
    """The active settings class (the one chosen by the last create_lab call)."""
    return _settings or config_by_name[get_config_name()]


class Lab:
    """A configured laboratory: settings plus entry points for ensembles and probes."""

    def __init__(self, settings):
        self.settings = settings

    def run_ensemble(self, run_config):
        from trfree.services.ensemble import run_ensemble

        return run_ensemble(run_config, workers=self.settings.WORKERS)

    def scaling_probe(self, n_grid, r, runs_per_n, seed, **kwargs):
        from trfree.services.independence import scaling_probe

        kwargs.setdefault("node_budget", self.settings.MIS_NODE_BUDGET)
        return scaling_probe(n_grid, r, runs_per_n, seed, **kwargs)


def create_lab(config_name=None):
    """
    Create and configure a Lab.

    Args:
        config_name (str): Configuration environment name ('development', 'testing',
            'production'); defaults to TRFREE_CONFIG.

    Returns:
        Lab: laboratory bound to the resolved settings.
    """
    global _settings
    settings = config_by_name[config_name or get_config_name()]
    _settings = settings

    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    settings.warn_if_oversubscribed()
    logging.getLogger(__name__).debug("Lab created with %s", settings.__name__)
    return Lab(settings)
