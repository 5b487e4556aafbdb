# fluxlab/__init__.py

import os
import importlib
import inspect
import logging
from typing import Dict, List

__version__ = "1.0.0"

_logger = logging.getLogger(__name__)


def _public_members(module) -> Dict[str, object]:
    """Classes and plain functions the module itself defines; imports and _private names are skipped."""
    members = {}
    for name, obj in inspect.getmembers(module, lambda o: inspect.isclass(o) or inspect.isfunction(o)):
        if not name.startswith('_') and obj.__module__ == module.__name__:
            members[name] = obj
    return members


def _import_all_modules() -> List[str]:
    """Import every package module and lift its classes and module-level operations to the package."""
    current_dir = os.path.dirname(os.path.abspath(__file__))
    module_files = sorted(
        f[:-3] for f in os.listdir(current_dir)
        if f.endswith('.py') and not f.startswith('_')
    )

    exported: Dict[str, str] = {}
    for module_name in module_files:
        try:
            module = importlib.import_module(f'.{module_name}', package=__package__)
        except Exception as e:
            _logger.warning(f"Failed to import {module_name}: {str(e)}")
            continue

        for name, obj in _public_members(module).items():
            if name in exported:
                _logger.debug(f"{module_name}.{name} shadows {exported[name]}.{name}")
            globals()[name] = obj
            exported[name] = module_name

    return sorted(exported)


__all__ = _import_all_modules()
