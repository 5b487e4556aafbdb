# fluxlab/ProgressManager.py

import threading
from datetime import datetime, timedelta
from typing import Optional

from rich.console import Console
from rich.panel import Panel


class ProgressManager:
    """Progress panel for parameter sweeps, with ETA and finish-time estimates."""

    def __init__(self, title: str = "Sweep Progress", refresh_seconds: float = 0.5,
                 enabled: bool = True, console: Optional[Console] = None):
        self.console = console or Console()
        self.title = title
        self.refresh_seconds = refresh_seconds
        self.enabled = enabled
        self.stats = {
            'total_jobs': 0,
            'completed_jobs': 0,
            'failed_jobs': 0,
            'cached_jobs': 0,
            'start_time': datetime.now()
        }
        self._last_render = datetime.now()
        self.last_label: Optional[str] = None
        self._lock = threading.Lock()

    def set_total_jobs(self, total: int):
        self.stats['total_jobs'] = total
        self.stats['start_time'] = datetime.now()

    def update_progress(self, operation_type: str, label: Optional[str] = None):
        """operation_type is one of 'completed_jobs', 'failed_jobs', 'cached_jobs'."""
        with self._lock:
            if operation_type in self.stats:
                self.stats[operation_type] += 1
            self.last_label = label
        self._display_progress()

    @property
    def processed(self) -> int:
        return self.stats['completed_jobs'] + self.stats['failed_jobs'] + self.stats['cached_jobs']

    def _calculate_progress(self) -> float:
        if self.stats['total_jobs'] == 0:
            return 0.0
        return self.processed / self.stats['total_jobs'] * 100

    def _format_duration(self, total_seconds: int) -> str:
        days, remainder = divmod(total_seconds, 86400)
        hours, remainder = divmod(remainder, 3600)
        minutes, seconds = divmod(remainder, 60)

        parts = []
        if days > 0:
            parts.append(f"{days}d")
        parts.append(f"{hours:02d}h")
        parts.append(f"{minutes:02d}m")
        parts.append(f"{seconds:02d}s")
        return " ".join(parts)

    def _display_progress(self, force: bool = False):
        if not self.enabled:
            return
        now = datetime.now()
        if not force and (now - self._last_render).total_seconds() < self.refresh_seconds:
            return
        self._last_render = now

        elapsed = now - self.stats['start_time']
        processed = self.processed
        total = self.stats['total_jobs']

        eta_str = "N/A"
        finish_str = "N/A"
        if processed > 0 and total > 0:
            elapsed_seconds = elapsed.total_seconds()
            speed = processed / elapsed_seconds if elapsed_seconds > 0 else 0
            if speed > 0:
                etc_seconds = int((total - processed) / speed)
                eta_str = self._format_duration(etc_seconds)
                finish_str = (now + timedelta(seconds=etc_seconds)).strftime("%Y-%m-%d %H:%M:%S")

        panel_content = [
            f"[bold blue]{self.title}[/bold blue]",
            "",
            f"📊 Overall Progress: [cyan]{self._calculate_progress():6.1f}%[/cyan]",
            f"⏱️ Elapsed Time: [cyan]{self._format_duration(int(elapsed.total_seconds()))}[/cyan]",
            f"🕒 ETA (Remaining): [cyan]{eta_str}[/cyan]",
            f"⌛ Finish Time: [cyan]{finish_str}[/cyan]",
            "",
            f"🧮 Total Jobs:  [cyan]{total:4d}[/cyan]",
            f"✅ Completed:   [green]{self.stats['completed_jobs']:4d}[/green]",
            f"♻️ From Cache:  [blue]{self.stats['cached_jobs']:4d}[/blue]",
            f"❌ Failed:      [red]{self.stats['failed_jobs']:4d}[/red]",
        ]

        self.console.print(Panel('\n'.join(panel_content), width=60, padding=(0, 2)))

    def print_final_results(self):
        if not self.enabled:
            return
        self._display_progress(force=True)
        if self.stats['failed_jobs']:
            self.console.print(f"[bold red]\n{self.stats['failed_jobs']} job(s) failed[/bold red]")
        else:
            self.console.print("[bold green]\nSweep completed[/bold green]")
