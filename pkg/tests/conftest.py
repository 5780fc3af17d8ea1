import os
import sys

# Allow ``from src...`` / ``from commands...`` when running a test file directly
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

os.environ.setdefault('TRANSFORMAP_VERBOSE', '0')


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale oracle and experiment runs (deselect with -m 'not slow')")
