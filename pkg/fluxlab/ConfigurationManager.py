# fluxlab/ConfigurationManager.py

import copy
import json
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

from .Errors import ConfigurationError

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    'logging': {
        'log_directory': './logs',
        'log_level': 'INFO',
        'log_format': '%(asctime)s - %(levelname)s - %(message)s',
        'max_log_size_mb': 10,
        'backup_count': 5
    },
    'output': {
        'directory': './results',
        'format_version': 1
    },
    'performance': {
        'jobs': 1,
        'progress_refresh_seconds': 0.5,
        'cache_entries': 32
    },
    'critical_points': {
        'grid_n': 64,
        'newton_tol': 1e-12,
        'max_iterations': 50,
        'residual_tol': 1e-10,
        'dedup_factor': 1e-6,
        'hyperbolicity_tol': 1e-6
    },
    'morse_graph': {
        'offset_factor': 1e-6,
        'step_factor': 1e-3,
        'trap_factor': 1e-3,
        'max_length_periods': 100.0,
        'gain_tol': 1e-8,
        'quadrature_tol': 5e-2
    },
    'tree': {
        'tie_tol': 1e-9,
        'exhaustive_max_vertices': 12,
        'enumeration_limit': 2000000
    },
    'merge_tree': {
        'window_periods': 3,
        'grid_n': 512,
        'max_window_periods': 7
    },
    'action': {
        'T_list': [5.0, 10.0, 20.0, 40.0],
        'knots_n': 200,
        'max_iterations': 10000
    },
    'fokker_planck': {
        'grid_n': 256,
        'residual_tol': 1e-11,
        'max_iterations': 50
    },
    'sde': {
        'dt': 0.01,
        'T': 2000.0,
        'batch': 200,
        'seed': 20240601,
        'burn_in_fraction': 0.1
    },
    'asymptotics': {
        'c_list': [0.0, 0.05, 0.1, 0.15, 0.2],
        'eps_list': [0.3, 0.2, 0.15],
        'exponent_tolerance': 0.15
    }
}

REQUIRED_FIELDS = [
    'logging.log_directory',
    'logging.log_level',
    'output.directory'
]

RUN_CONFIG_KEYS = {
    'subcommand', 'potential', 'c', 'c_list', 'direction', 'eps', 'eps_list',
    'grid', 'seed', 'output_directory', 'format_version', 'jobs',
    'edges', 'root', 'sign', 'window_periods', 'barcode',
    'start', 'end', 'T', 'T_list', 'knots_n', 'form', 'dt', 'batch',
    'c1', 'c2', 'r', 'chain', 'compare', 'dump'
}


class ConfigurationManager:
    def __init__(self, config_path: Optional[str] = './config.json'):
        self.config_path = config_path
        self.config = self._load_configuration()
        self._validate_configuration()
        self._setup_directories()

    def _load_configuration(self) -> Dict:
        config = copy.deepcopy(DEFAULT_CONFIG)
        if self.config_path is None:
            return config

        try:
            with open(self.config_path, 'r') as f:
                loaded = json.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"Configuration file not found at {self.config_path}")
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Invalid JSON in configuration file: {e}")

        if not isinstance(loaded, dict):
            raise ConfigurationError("Configuration root must be a JSON object")

        for section, values in loaded.items():
            if section not in DEFAULT_CONFIG:
                raise ConfigurationError(f"Unknown configuration section: {section}")
            if not isinstance(values, dict):
                raise ConfigurationError(f"Section {section} must be a JSON object")
            for key, value in values.items():
                if key not in DEFAULT_CONFIG[section]:
                    raise ConfigurationError(f"Unknown configuration key: {section}.{key}")
                config[section][key] = value
        return config

    def _validate_configuration(self) -> None:
        for field in REQUIRED_FIELDS:
            current = self.config
            for part in field.split('.'):
                if part not in current or current[part] in (None, ''):
                    raise ConfigurationError(f"Missing required configuration field: {field}")
                current = current[part]

        level = str(self.config['logging']['log_level']).upper()
        if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            raise ConfigurationError(f"Invalid log level: {level}")

    def _setup_directories(self) -> None:
        Path(self.config['logging']['log_directory']).mkdir(parents=True, exist_ok=True)

    def section(self, name: str) -> Dict[str, Any]:
        if name not in self.config:
            raise ConfigurationError(f"Unknown configuration section: {name}")
        return self.config[name]

    def get_log_path(self) -> str:
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        return str(Path(self.config['logging']['log_directory']) / f'fluxlab_{timestamp}.log')

    def get_output_directory(self) -> str:
        return self.config['output']['directory']

    def get_jobs(self, requested: Optional[int] = None) -> int:
        env_value = os.environ.get('FLUXLAB_JOBS')
        if env_value:
            try:
                jobs = int(env_value)
            except ValueError:
                raise ConfigurationError(f"FLUXLAB_JOBS must be an integer, got {env_value!r}")
        elif requested is not None:
            jobs = int(requested)
        else:
            jobs = int(self.config['performance']['jobs'])
        if jobs < 1:
            raise ConfigurationError(f"Job count must be positive, got {jobs}")
        return jobs

    def validate_run_config(self, run_config: Dict[str, Any]) -> Dict[str, Any]:
        """Schema check for a RunConfig; runs before any computation."""
        unknown = sorted(set(run_config) - RUN_CONFIG_KEYS)
        if unknown:
            raise ConfigurationError(f"Unknown run configuration keys: {', '.join(unknown)}")
        if 'subcommand' not in run_config:
            raise ConfigurationError("Run configuration lacks a subcommand")

        for key in ('eps', 'r', 'dt', 'T'):
            value = run_config.get(key)
            if value is not None and float(value) <= 0:
                raise ConfigurationError(f"{key} must be positive, got {value}")
        for key in ('eps_list', 'T_list'):
            for value in run_config.get(key) or []:
                if float(value) <= 0:
                    raise ConfigurationError(f"{key} entries must be positive, got {value}")
        for key in ('c', 'c1', 'c2'):
            value = run_config.get(key)
            if value is not None and float(value) < 0:
                raise ConfigurationError(f"{key} must be non-negative, got {value}")
        for value in run_config.get('c_list') or []:
            if float(value) < 0:
                raise ConfigurationError(f"c_list entries must be non-negative, got {value}")

        run_config.setdefault('format_version', self.config['output']['format_version'])
        run_config.setdefault('output_directory', self.get_output_directory())
        return run_config
