"""
Utility modules
"""
from .config_loader import ConfigFileLoader, load_run_config, parse_overrides
from .seeding import substream

__all__ = [
    'ConfigFileLoader',
    'load_run_config',
    'parse_overrides',
    'substream'
]
