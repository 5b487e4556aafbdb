import json
import logging
from pathlib import Path

import pytest

from fluxlab.ConfigurationManager import ConfigurationManager
from fluxlab.Errors import ConfigurationError
from fluxlab.LogManager import LogManager


def _write(tmp_path, payload):
    path = tmp_path / 'config.json'
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload))
    return str(path)


def test_file_values_override_defaults(config_manager, tmp_path):
    config = config_manager.config
    assert config['logging']['log_level'] == 'DEBUG'
    assert config['sde']['dt'] == 0.01
    assert config_manager.get_output_directory() == str(tmp_path / 'results')
    assert (tmp_path / 'logs').is_dir()


def test_defaults_without_a_file(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    manager = ConfigurationManager(None)
    assert manager.config['output']['format_version'] == 1
    assert (tmp_path / 'logs').is_dir()


@pytest.mark.parametrize('payload', [
    {'plotting': {'dpi': 300}},
    {'sde': {'steps': 10}},
    {'logging': {'log_level': 'LOUD'}},
    {'logging': {'log_directory': ''}},
    {'sde': 0.01},
    '[1, 2]',
    '{"logging": ',
])
def test_rejected_configurations(tmp_path, payload):
    with pytest.raises(ConfigurationError):
        ConfigurationManager(_write(tmp_path, payload))


def test_missing_configuration_file(tmp_path):
    with pytest.raises(ConfigurationError):
        ConfigurationManager(str(tmp_path / 'absent.json'))


def test_unknown_section_lookup(config_manager):
    assert config_manager.section('tree') is config_manager.config['tree']
    with pytest.raises(ConfigurationError):
        config_manager.section('plotting')


def test_log_path_lives_in_log_directory(config_manager, tmp_path):
    path = Path(config_manager.get_log_path())
    assert path.parent == tmp_path / 'logs'
    assert path.name.startswith('fluxlab_') and path.suffix == '.log'


def test_job_count_resolution(config_manager, monkeypatch):
    monkeypatch.delenv('FLUXLAB_JOBS', raising=False)
    assert config_manager.get_jobs() == 1
    assert config_manager.get_jobs(4) == 4
    monkeypatch.setenv('FLUXLAB_JOBS', '3')
    assert config_manager.get_jobs(4) == 3
    monkeypatch.setenv('FLUXLAB_JOBS', 'many')
    with pytest.raises(ConfigurationError):
        config_manager.get_jobs()
    monkeypatch.setenv('FLUXLAB_JOBS', '0')
    with pytest.raises(ConfigurationError):
        config_manager.get_jobs()


def test_run_config_defaults(config_manager, tmp_path):
    run_config = config_manager.validate_run_config({'subcommand': 'hstar', 'c': 0.0})
    assert run_config['format_version'] == 1
    assert run_config['output_directory'] == str(tmp_path / 'results')


@pytest.mark.parametrize('run_config', [
    {'subcommand': 'hstar', 'colour': 'red'},
    {'c': 0.1},
    {'subcommand': 'fp-flux', 'eps': 0.0},
    {'subcommand': 'fp-flux', 'eps_list': [0.3, -0.1]},
    {'subcommand': 'action-min', 'T_list': [0.0]},
    {'subcommand': 'hstar', 'c': -0.1},
    {'subcommand': 'asymptotics', 'c_list': [0.1, -0.2]},
    {'subcommand': 'measure-heights', 'r': -1.0},
])
def test_run_config_rejections(config_manager, run_config):
    with pytest.raises(ConfigurationError):
        config_manager.validate_run_config(run_config)


def test_log_manager_writes_file_without_stacking_handlers(tmp_path):
    log_path = tmp_path / 'run.log'
    LogManager(str(log_path), 'INFO')
    logger = LogManager(str(log_path), 'debug', max_log_size_mb=1, backup_count=2).get_logger()
    try:
        assert logger.name == 'fluxlab'
        assert logger.level == logging.DEBUG
        assert len(logger.handlers) == 2
        logger.info('grid solve finished')
        for handler in logger.handlers:
            handler.flush()
        assert 'INFO - grid solve finished' in log_path.read_text()
    finally:
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
