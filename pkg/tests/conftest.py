import json
import logging
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from fluxlab.ConfigurationManager import ConfigurationManager  # noqa: E402
from fluxlab.DomainFields import TiltedDrift  # noqa: E402
from fluxlab.SolveCache import SolveCache  # noqa: E402

DATA_DIR = Path(__file__).resolve().parent / 'data'


@pytest.fixture(autouse=True)
def _fresh_solve_cache():
    SolveCache().clear()
    yield
    SolveCache().clear()


@pytest.fixture
def logger():
    return logging.getLogger('fluxlab.tests')


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def nr2006():
    return TiltedDrift.preset('nr2006')


@pytest.fixture
def cos1d():
    return TiltedDrift.preset('cos1d')


@pytest.fixture
def config_file(tmp_path):
    """Config whose logs and results stay inside the test's temporary directory."""
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({
        'logging': {'log_directory': str(tmp_path / 'logs'), 'log_level': 'DEBUG'},
        'output': {'directory': str(tmp_path / 'results')},
    }))
    return path


@pytest.fixture
def config_manager(config_file):
    return ConfigurationManager(str(config_file))
