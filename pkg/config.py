"""Configuration settings for the T^(r)-free process laboratory.

This module contains configuration classes for different environments.
Per-experiment parameters live in a RunConfig (see trfree.schemas); the classes
here hold process-wide settings read from the environment.
"""
import logging
import os

from dotenv import load_dotenv

basedir = os.path.abspath(os.path.dirname(__file__))
load_dotenv(os.path.join(basedir, ".env"))

class Config:
    """Base configuration with environment-based defaults."""

    WORKERS = int(os.getenv("TRFREE_WORKERS", "1"))
    LOG_LEVEL = os.getenv("TRFREE_LOG_LEVEL", "INFO")
    ORACLE_MAX_N = int(os.getenv("TRFREE_ORACLE_MAX_N", "12"))
    MIS_NODE_BUDGET = int(os.getenv("TRFREE_MIS_NODE_BUDGET", str(10**7)))
    CHECK_PARTITION_EVERY_STEP = False

    @classmethod
    def warn_if_oversubscribed(cls):
        """Warn if more workers are requested than there are CPUs."""
        cpus = os.cpu_count() or 1
        if cls.WORKERS > cpus:
            logging.warning(
                "TRFREE_WORKERS=%s exceeds the %s available CPUs.", cls.WORKERS, cpus
            )

class DevelopmentConfig(Config):
    """Development configuration."""
    LOG_LEVEL = os.getenv("TRFREE_LOG_LEVEL", "DEBUG")
    CHECK_PARTITION_EVERY_STEP = True

class TestingConfig(Config):
    """Testing configuration."""
    WORKERS = 1
    LOG_LEVEL = "WARNING"
    CHECK_PARTITION_EVERY_STEP = True
    MIS_NODE_BUDGET = 10**6

class ProductionConfig(Config):
    """Production configuration: partition checked at checkpoints only."""
    CHECK_PARTITION_EVERY_STEP = False

config_by_name = {
    "development": DevelopmentConfig,
    "testing": TestingConfig,
    "production": ProductionConfig,
    "default": ProductionConfig,
}

def get_config_name():
    """Get the configuration name from environment."""
    return os.getenv("TRFREE_CONFIG", "default")
