# fluxlab/PrerequisitesManager.py

import importlib
import re
import subprocess
import sys
from importlib import metadata
from typing import Dict, List, Optional, Tuple


def _version_tuple(text: str) -> Tuple[int, ...]:
    """Leading numeric release components: '1.26.4' -> (1, 26, 4), '2.0rc1' -> (2, 0)."""
    parts = []
    for piece in text.split('.'):
        match = re.match(r'\d+', piece)
        if match is None:
            break
        parts.append(int(match.group()))
        if match.end() < len(piece):
            break
    return tuple(parts)


class PrerequisitesManager:
    """Numerical stack check: every package importable and at least its minimum release."""

    # pip name -> (import name, minimum release)
    REQUIRED_PACKAGES: Dict[str, Tuple[str, str]] = {
        'numpy': ('numpy', '1.22'),
        'scipy': ('scipy', '1.8'),
        'networkx': ('networkx', '2.8'),
        'rich': ('rich', '12.0')
    }

    def __init__(self, interactive: Optional[bool] = None):
        self.missing_packages: List[str] = []
        self.outdated_packages: Dict[str, str] = {}
        self.interactive = interactive

    @staticmethod
    def installed_version(package: str) -> Optional[str]:
        try:
            return metadata.version(package)
        except metadata.PackageNotFoundError:
            return None

    def check_prerequisites(self) -> bool:
        self.missing_packages = []
        self.outdated_packages = {}
        for package, (import_name, minimum) in self.REQUIRED_PACKAGES.items():
            try:
                importlib.import_module(import_name)
            except ImportError:
                self.missing_packages.append(package)
                continue
            version = self.installed_version(package)
            if version is not None and _version_tuple(version) < _version_tuple(minimum):
                self.outdated_packages[package] = version
        return not self.missing_packages and not self.outdated_packages

    def requirement(self, package: str) -> str:
        return f"{package}>={self.REQUIRED_PACKAGES[package][1]}"

    def display_status(self):
        if not self.missing_packages and not self.outdated_packages:
            print("\n✅ Numerical stack is ready.")
            return

        if self.missing_packages:
            print("\n⚠️  Missing required packages:")
            for package in self.missing_packages:
                print(f"  • {self.requirement(package)}")
        if self.outdated_packages:
            print("\n⚠️  Packages below their minimum release:")
            for package, version in self.outdated_packages.items():
                print(f"  • {package} {version} (need {self.requirement(package)})")

    def install_missing_packages(self) -> bool:
        pending = self.missing_packages + list(self.outdated_packages)
        if not pending:
            return True
        interactive = sys.stdin.isatty() if self.interactive is None else self.interactive
        if not interactive:
            print("Run: pip install -r requirements.txt")
            return False

        print(f"\nInstall or upgrade {', '.join(pending)}? (y/n)")
        if input().lower().strip() != 'y':
            print("Installation cancelled. Please install the required packages manually.")
            return False

        try:
            subprocess.check_call([sys.executable, "-m", "pip", "install", "--upgrade",
                                   *(self.requirement(p) for p in pending)])
        except subprocess.CalledProcessError as e:
            print(f"\n❌ pip failed: {str(e)}")
            return False

        importlib.invalidate_caches()
        if not self.check_prerequisites():
            self.display_status()
            print("\n❌ Restart flux-lab after the upgrade so the new releases are imported.")
            return False
        print("\n✅ Numerical stack installed.")
        return True

    def verify_environment(self) -> bool:
        if self.check_prerequisites():
            return True
        self.display_status()
        return self.install_missing_packages()
