# fluxlab/ComparisonManager.py

import logging
from typing import Any, Dict, List, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from .FokkerPlanckSolver import FluxEstimate


class ComparisonManager:
    """Cross-checks between independent routes: grid vs Monte-Carlo flux, graph vs merge-tree h*."""

    def __init__(self, logger: Optional[logging.Logger] = None, console: Optional[Console] = None):
        self.logger = logger or logging.getLogger('fluxlab')
        self.console = console or Console()

    def compare_flux_estimates(self, reference: FluxEstimate, candidate: FluxEstimate,
                               sigmas: float = 3.0) -> Dict[str, Any]:
        difference = candidate.value - reference.value
        combined = float(np.hypot(reference.uncertainty or 0.0, candidate.uncertainty or 0.0))
        z_score = abs(difference) / combined if combined > 0 else (0.0 if difference == 0 else np.inf)
        report = {
            'kind': 'flux',
            'reference_method': reference.method,
            'candidate_method': candidate.method,
            'reference': reference.value,
            'candidate': candidate.value,
            'difference': difference,
            'uncertainty': combined,
            'z_score': float(z_score),
            'passed': bool(z_score <= sigmas)
        }
        self.logger.info(f"Flux comparison {candidate.method} vs {reference.method}: "
                         f"z = {z_score:.2f} ({'pass' if report['passed'] else 'FAIL'})")
        return report

    def compare_hstar(self, graph_value: float, merge_value: float, tolerance: float) -> Dict[str, Any]:
        difference = merge_value - graph_value
        report = {
            'kind': 'hstar',
            'reference_method': 'graph',
            'candidate_method': 'merge-tree',
            'reference': graph_value,
            'candidate': merge_value,
            'difference': difference,
            'uncertainty': tolerance,
            'passed': bool(abs(difference) <= tolerance)
        }
        if not report['passed']:
            self.logger.warning(f"Graph and merge-tree h* differ by {difference:.3e} (tolerance {tolerance:.3e})")
        return report

    def compare_graph_exponents(self, heights: Dict[str, Any], theorem5: Optional[Dict[str, Any]] = None,
                                measure: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
        """Side-by-side h*, the cycle-tree exponent, and per-vertex h(v) against the measure exponents."""
        vertices = []
        for v, h in sorted(heights['vertex_heights'].items()):
            row = {'vertex': v, 'height': h}
            if measure is not None:
                row['measure_exponent'] = measure.get(v)
                row['agrees'] = measure.get(v) is not None and abs(measure[v] - h) <= 1e-9
            vertices.append(row)

        report = {'kind': 'graph', 'h_star': heights['h_star'], 'witness': heights['witness'],
                  'vertices': vertices}
        if theorem5 is not None:
            report['theorem5_exponent'] = theorem5['exponent']
            report['assumption_holds'] = theorem5['assumption_holds']
            report['exponents_agree'] = (theorem5['exponent'] is not None
                                         and abs(theorem5['exponent'] - heights['h_star']) <= 1e-9)
        return report

    def print_comparison_report(self, reports: List[Dict[str, Any]]) -> None:
        table = Table(title="Cross-validation Report")
        table.add_column("Check")
        table.add_column("Reference", justify="right")
        table.add_column("Candidate", justify="right")
        table.add_column("Difference", justify="right")
        table.add_column("Result")

        for report in reports:
            if report['kind'] == 'graph':
                continue
            label = f"{report['candidate_method']} vs {report['reference_method']}"
            result = "[green]✅ pass[/green]" if report['passed'] else "[red]❌ fail[/red]"
            table.add_row(label, f"{report['reference']:.6g}", f"{report['candidate']:.6g}",
                          f"{report['difference']:.3e}", result)
        self.console.print(table)

        for report in reports:
            if report['kind'] != 'graph':
                continue
            self.console.print(f"\n📐 h* = {report['h_star']:.6g} (witness edge {report['witness']})")
            if 'theorem5_exponent' in report:
                mark = "✅" if report['exponents_agree'] else "⚠️"
                exponent = report['theorem5_exponent']
                shown = "n/a" if exponent is None else f"{exponent:.6g}"
                self.console.print(f"{mark} Cycle-tree exponent {shown}, "
                                   f"assumption holds: {report['assumption_holds']}")
            for row in report['vertices']:
                line = f"  {row['vertex']}: h = {row['height']:.6g}"
                if 'measure_exponent' in row:
                    line += f", measure exponent = {row['measure_exponent']:.6g}"
                    if not row['agrees']:
                        line += " ⚠️"
                self.console.print(line)
