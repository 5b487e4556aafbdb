# fluxlab/OutputManager.py

import csv
import hashlib
import json
import logging
import platform
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .Errors import InputError
from .PrerequisitesManager import PrerequisitesManager

MANIFEST_NAME = 'manifest.json'


def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-friendly Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


class OutputManager:
    """Writes CSVs, JSON sidecars and the run manifest into one output directory."""

    def __init__(self, directory: str, logger: Optional[logging.Logger] = None,
                 format_version: int = 1):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.logger = logger or logging.getLogger('fluxlab')
        self.format_version = format_version
        self.files: List[Path] = []

    def path(self, name: str) -> Path:
        return self.directory / name

    def write_csv(self, name: str, rows: Sequence[Dict[str, Any]],
                  fieldnames: Optional[Sequence[str]] = None) -> Path:
        if fieldnames is None:
            fieldnames = list(dict.fromkeys(k for row in rows for k in row))
        target = self.path(name)
        with open(target, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction='ignore',
                                    lineterminator='\r\n')
            writer.writeheader()
            for row in rows:
                writer.writerow({k: self._cell(row.get(k)) for k in fieldnames})
        self.files.append(target)
        self.logger.debug(f"Wrote {len(rows)} rows to {target}")
        return target

    @staticmethod
    def _cell(value: Any) -> Any:
        if value is None:
            return ''
        if isinstance(value, (np.floating, float)):
            return repr(float(value))
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, (list, tuple)):
            return ' '.join(str(v) for v in value)
        return value

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        target = self.path(name)
        with open(target, 'w', encoding='utf-8') as f:
            json.dump(_plain(payload), f, indent=2, sort_keys=True)
        self.files.append(target)
        return target

    def register(self, *paths: Any) -> None:
        self.files.extend(Path(p) for p in paths)

    @staticmethod
    def sha256(path: Path) -> str:
        digest = hashlib.sha256()
        with open(path, 'rb') as f:
            for block in iter(lambda: f.read(1 << 20), b''):
                digest.update(block)
        return digest.hexdigest()

    @staticmethod
    def package_versions() -> Dict[str, str]:
        versions = {'python': platform.python_version()}
        for name in PrerequisitesManager.REQUIRED_PACKAGES:
            versions[name] = PrerequisitesManager.installed_version(name) or 'missing'
        return versions

    def write_manifest(self, inputs: Dict[str, Any], started: datetime,
                       seeds: Optional[Dict[str, Any]] = None) -> Path:
        finished = datetime.now()
        manifest = {
            'format_version': self.format_version,
            'inputs': inputs,
            'versions': self.package_versions(),
            'seeds': seeds or {},
            'started': started.isoformat(timespec='seconds'),
            'wall_time_seconds': (finished - started).total_seconds(),
            'files': [{'name': p.name, 'sha256': self.sha256(p)} for p in self.files if p.exists()]
        }
        target = self.path(MANIFEST_NAME)
        with open(target, 'w', encoding='utf-8') as f:
            json.dump(_plain(manifest), f, indent=2, sort_keys=True)
        self.logger.info(f"Manifest written to {target} ({len(manifest['files'])} files)")
        return target


def load_manifest(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise InputError(f"Manifest not found: {path}")
    except json.JSONDecodeError as e:
        raise InputError(f"Manifest is not valid JSON: {e}")
    if 'inputs' not in manifest:
        raise InputError("Manifest lacks its recorded inputs", path=path)
    return manifest
