# fluxlab/AsymptoticsManager.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ConfigurationManager import DEFAULT_CONFIG
from .CriticalPointManager import CriticalPoint, CriticalPointManager
from .DomainFields import ClosedOneForm, TiltedDrift
from .Errors import FluxLabError, GridTooCoarse, InputError, InsufficientData
from .FokkerPlanckSolver import FokkerPlanckSolver, flux_1d_closed_form
from .MergeTreeManager import MergeTreeManager
from .MorseGraphManager import MorseGraphManager
from .ProgressManager import ProgressManager
from .TreeOptimizer import TreeOptimizer


@dataclass
class HStarCurve:
    rows: List[Dict[str, Any]]
    increasing: Optional[bool]
    slope_at_zero: Optional[float]

    def values(self) -> List[Tuple[float, float]]:
        return [(r['c'], r['hstar']) for r in self.rows if r['flag'] is None]


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]]
    extrapolation: Dict[float, Optional[Dict[str, float]]]
    skipped: List[Dict[str, Any]] = field(default_factory=list)
    curve: Optional[HStarCurve] = None

    def long_format(self) -> List[Dict[str, Any]]:
        """(series, x, y) rows for plotting."""
        out = []
        for row in self.rows:
            out.append({'series': f"minus_eps_log_flux[c={row['c']:g}]",
                        'x': row['eps'], 'y': row['minus_eps_log_flux']})
        if self.curve is not None:
            for row in self.curve.rows:
                if row['flag'] is None:
                    out.append({'series': 'hstar_graph', 'x': row['c'], 'y': row['hstar']})
                if row.get('hstar_merge_tree') is not None:
                    out.append({'series': 'hstar_merge_tree', 'x': row['c'], 'y': row['hstar_merge_tree']})
        for c, fit in sorted(self.extrapolation.items()):
            if fit is not None:
                out.append({'series': 'psi_extrapolated', 'x': c, 'y': fit['psi']})
        return out


class AsymptoticsManager:
    """Tilt and noise sweeps: -eps ln F against the graph exponent h*(c)."""

    def __init__(self, logger: Optional[logging.Logger] = None,
                 config: Optional[Dict[str, Dict[str, Any]]] = None,
                 solver: Optional[FokkerPlanckSolver] = None, progress: bool = False):
        self.logger = logger or logging.getLogger('fluxlab')
        self.config = config or DEFAULT_CONFIG
        self.settings = {**DEFAULT_CONFIG['asymptotics'], **self.config.get('asymptotics', {})}
        self.solver = solver or FokkerPlanckSolver(self.logger, self.config.get('fokker_planck'))
        self.tree = TreeOptimizer(self.logger, self.config.get('tree'))
        self.progress = progress

    # --- graph route -------------------------------------------------------------

    def graph_analysis(self, drift: TiltedDrift) -> Dict[str, Any]:
        """Critical points, Morse graph and tree heights for one tilt."""
        finder = CriticalPointManager(drift, self.logger, self.config.get('critical_points'))
        points = finder.find_critical_points()
        graph = MorseGraphManager(drift, self.logger, self.config.get('morse_graph')).build_morse_graph(points)
        digraph = graph.to_weighted_digraph()
        heights = self.tree.heights_and_hstar(digraph)
        root = graph.vertices[int(heights['root'][1:])]
        return {'points': points, 'graph': graph, 'digraph': digraph,
                'heights': heights, 'root': root}

    def hstar_curve(self, drift: TiltedDrift, c_list: Sequence[float],
                    direction: Optional[Sequence[float]] = None,
                    merge_tree: bool = False) -> HStarCurve:
        beta = direction if direction is not None else drift.tilt_direction()
        rows = []
        previous: Optional[CriticalPoint] = None
        for c in sorted(float(c) for c in c_list):
            tilted = drift.with_tilt(c, beta)
            row: Dict[str, Any] = {'c': c, 'hstar': float('nan'), 'witness': None,
                                   'vertex_x': float('nan'), 'vertex_y': float('nan'),
                                   'hstar_merge_tree': None, 'root_continued': None, 'flag': None}
            try:
                analysis = self.graph_analysis(tilted)
                root = analysis['root']
                if previous is not None:
                    continued = CriticalPointManager(tilted, self.logger).track_vertex(
                        previous, analysis['points'])
                    row['root_continued'] = bool(
                        tilted.torus.distance(continued.position, root.position) < 1e-6)
                previous = root
                position = list(root.position) + [float('nan')] * (2 - len(root.position))
                row.update({'hstar': analysis['heights']['h_star'],
                            'witness': analysis['heights']['witness'],
                            'vertex_x': float(position[0]), 'vertex_y': float(position[1])})
                if merge_tree and c > 0:
                    merger = MergeTreeManager(tilted, self.logger, self.config.get('merge_tree'))
                    row['hstar_merge_tree'] = merger.hstar_via_merge_tree(root.position)
            except FluxLabError as e:
                self.logger.warning(f"h* at c={c} flagged: {e.describe()}")
                row['flag'] = e.name
            rows.append(row)

        valid = [(r['c'], r['hstar']) for r in rows if r['flag'] is None]
        increasing = None
        slope = None
        if len(valid) >= 2:
            increasing = all(b[1] > a[1] for a, b in zip(valid, valid[1:]))
            (c0, h0), (c1, h1) = valid[0], valid[1]
            if c0 == 0.0:
                slope = (h1 - h0) / (c1 - c0)
        self.logger.info(f"h* curve over {len(rows)} tilts: increasing={increasing}, slope at 0={slope}")
        return HStarCurve(rows=rows, increasing=increasing, slope_at_zero=slope)

    # --- grid route ----------------------------------------------------------------

    def _tilt_form(self, drift: TiltedDrift) -> ClosedOneForm:
        return ClosedOneForm(drift.torus, drift.tilt_direction())

    def _flux_row(self, drift: TiltedDrift, c: float, eps: float, grid: Any,
                  form: Optional[ClosedOneForm]) -> Dict[str, Any]:
        tilted = drift.with_tilt(c, drift.tilt_direction())
        field_ = self.solver.solve_stationary(tilted, eps, grid)
        estimate = self.solver.flux(field_, form or self._tilt_form(drift))
        entropy = self.solver.entropy_production_check(field_)
        return {'c': c, 'eps': eps, 'flux': estimate.value,
                'minus_eps_log_flux': estimate.minus_eps_log,
                'entropy_production': entropy['lhs'], 'entropy_residual': entropy['residual'],
                'div_residual': field_.residual}

    def exponent_fit(self, rows: Sequence[Dict[str, Any]]) -> Dict[str, float]:
        """Least squares for -eps ln F = psi + a eps."""
        eps, y = [], []
        for row in rows:
            value = row.get('minus_eps_log_flux')
            if value is None:
                value = -row['eps'] * np.log(row['flux']) if row['flux'] > 0 else np.nan
            if np.isfinite(value):
                eps.append(float(row['eps']))
                y.append(float(value))
        eps, y = np.asarray(eps), np.asarray(y)
        if np.unique(eps).size < 3 or eps.max() < 3.0 * eps.min():
            raise InsufficientData("Need three noise levels spanning a factor of three",
                                   eps=sorted(set(eps.tolist())))
        design = np.stack([np.ones_like(eps), eps], axis=1)
        coefficients, *_ = np.linalg.lstsq(design, y, rcond=None)
        residual = float(np.sqrt(np.mean((design @ coefficients - y) ** 2)))
        return {'psi': float(coefficients[0]), 'slope': float(coefficients[1]),
                'residual': residual, 'points': int(eps.size)}

    def sweep(self, drift: TiltedDrift, c_list: Optional[Sequence[float]] = None,
              eps_list: Optional[Sequence[float]] = None, grid: Any = None,
              form: Optional[ClosedOneForm] = None, jobs: int = 1,
              merge_tree: bool = False, with_hstar: bool = True) -> SweepResult:
        c_list = sorted(float(c) for c in (c_list or self.settings['c_list']))
        eps_list = sorted((float(e) for e in (eps_list or self.settings['eps_list'])), reverse=True)
        tasks = [(c, eps) for c in c_list for eps in eps_list]

        progress = ProgressManager("Flux Sweep", enabled=self.progress)
        progress.set_total_jobs(len(tasks))

        def run(task):
            c, eps = task
            try:
                cached = self.solver.is_cached(drift.with_tilt(c, drift.tilt_direction()), eps, grid)
                row = self._flux_row(drift, c, eps, grid, form)
                progress.update_progress('cached_jobs' if cached else 'completed_jobs', f"c={c}, eps={eps}")
                return row
            except GridTooCoarse as e:
                progress.update_progress('failed_jobs', f"c={c}, eps={eps}")
                return {'c': c, 'eps': eps, 'skipped': e.name}
            except FluxLabError as e:
                self.logger.warning(f"Sweep point c={c}, eps={eps} failed: {e.describe()}")
                progress.update_progress('failed_jobs', f"c={c}, eps={eps}")
                return {'c': c, 'eps': eps, 'skipped': e.name}

        with ThreadPoolExecutor(max_workers=max(1, int(jobs))) as pool:
            results = list(pool.map(run, tasks))
        progress.print_final_results()

        rows = [r for r in results if 'skipped' not in r]
        skipped = [r for r in results if 'skipped' in r]

        curve = None
        if with_hstar:
            curve = self.hstar_curve(drift, c_list, merge_tree=merge_tree)
            by_c = {r['c']: r for r in curve.rows}
            for row in rows:
                row['hstar_graph'] = by_c[row['c']]['hstar']
                row['hstar_merge_tree'] = by_c[row['c']]['hstar_merge_tree']

        extrapolation: Dict[float, Optional[Dict[str, float]]] = {}
        for c in c_list:
            try:
                extrapolation[c] = self.exponent_fit([r for r in rows if r['c'] == c])
            except InsufficientData:
                extrapolation[c] = None
        return SweepResult(rows=rows, extrapolation=extrapolation, skipped=skipped, curve=curve)

    def negative_resistance_demo(self, drift: TiltedDrift, c1: float, c2: float, eps: float,
                                 grid: Any = None, method: str = 'fp') -> Dict[str, Any]:
        if not 0 < c1 <= c2:
            raise InputError("Negative-resistance demo needs 0 < c1 <= c2", c1=c1, c2=c2)

        if method == 'closed-form':
            if drift.dim != 1:
                raise InputError("Closed-form fluxes are one-dimensional")
            flux1 = flux_1d_closed_form(drift.potential, c1, eps)
            flux2 = flux_1d_closed_form(drift.potential, c2, eps)
        elif method == 'fp':
            flux1 = self._flux_row(drift, c1, eps, grid, None)['flux']
            flux2 = self._flux_row(drift, c2, eps, grid, None)['flux']
        else:
            raise InputError(f"Unknown flux method {method!r}")

        curve = self.hstar_curve(drift, [c1, c2]) if c1 != c2 else None
        predicted = None
        hstar = {}
        if curve is not None and len(curve.values()) == 2:
            (_, h1), (_, h2) = curve.values()
            predicted = h1 < h2
            hstar = {'hstar1': h1, 'hstar2': h2}

        verdict = flux2 < flux1
        self.logger.info(f"Negative resistance at eps={eps}: F({c1})={flux1:.6g}, F({c2})={flux2:.6g}, "
                         f"verdict={verdict}, h* predicts {predicted}")
        return {'c1': c1, 'c2': c2, 'eps': eps, 'flux1': flux1, 'flux2': flux2,
                'verdict': verdict, 'predicted': predicted, **hstar}

    def find_negative_resistance_pair(self, drift: TiltedDrift, c_list: Sequence[float],
                                      eps_list: Sequence[float], grid: Any = None,
                                      jobs: int = 1) -> Dict[str, Any]:
        """Scan a sweep for c1 < c2 at one eps with F(c2) < F(c1); the largest drop wins."""
        c_list = [c for c in c_list if c > 0]
        result = self.sweep(drift, c_list, eps_list, grid, jobs=jobs, with_hstar=False)
        best = None
        for eps in sorted({r['eps'] for r in result.rows}):
            at_eps = sorted((r for r in result.rows if r['eps'] == eps), key=lambda r: r['c'])
            for i, low in enumerate(at_eps):
                for high in at_eps[i + 1:]:
                    if low['flux'] > 0 and high['flux'] < low['flux']:
                        ratio = high['flux'] / low['flux']
                        if best is None or ratio < best['ratio']:
                            best = {'c1': low['c'], 'c2': high['c'], 'eps': eps,
                                    'flux1': low['flux'], 'flux2': high['flux'], 'ratio': ratio}
        if best is None:
            self.logger.warning("No negative-resistance pair in the scanned tilts and noise levels")
            return {'found': False, 'scanned': len(result.rows)}
        self.logger.info(f"Negative resistance: F({best['c2']}) < F({best['c1']}) at eps={best['eps']}")
        return {'found': True, 'scanned': len(result.rows), **best}

    # --- invariant measure -----------------------------------------------------------

    def measure_heights_check(self, drift: TiltedDrift, eps: float, r: float,
                              grid: Any = None, tolerance: float = 0.15) -> Dict[str, Any]:
        """-eps ln mass(B_r(v)) against the tree height h(v), per Morse vertex."""
        finder = CriticalPointManager(drift, self.logger, self.config.get('critical_points'))
        graph = MorseGraphManager(drift, self.logger, self.config.get('morse_graph')).build_morse_graph(
            finder.find_critical_points())
        digraph = graph.to_weighted_digraph()
        heights = self.tree.vertex_heights(digraph)
        exponents = self.tree.measure_exponents(digraph)
        field_ = self.solver.solve_stationary(drift, eps, grid)

        scale = max([h for h in heights.values() if h > 0], default=1.0)
        rows = []
        for i, vertex in enumerate(graph.vertices):
            name = graph.vertex_id(i)
            mass = self.solver.ball_mass(field_, vertex.position, r)
            observed = -eps * np.log(mass) if mass > 0 else np.inf
            h = heights[name]
            allowed = tolerance * (h if h > 0 else scale)
            position = list(vertex.position) + [float('nan')] * (2 - len(vertex.position))
            rows.append({'vertex': name, 'x': float(position[0]), 'y': float(position[1]),
                         'height': h, 'measure_exponent': exponents[name], 'mass': mass,
                         'minus_eps_log_mass': float(observed),
                         'passed': bool(abs(observed - h) <= allowed)})
        passed = all(row['passed'] for row in rows)
        self.logger.info(f"Measure heights at eps={eps}, r={r}: {'pass' if passed else 'FAIL'}")
        return {'rows': rows, 'passed': passed, 'eps': eps, 'r': r}
