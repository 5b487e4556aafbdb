# fluxlab/RunManager.py

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import numpy as np
from rich.console import Console

from .ActionManager import ActionManager
from .AsymptoticsManager import AsymptoticsManager
from .ComparisonManager import ComparisonManager
from .ConfigurationManager import ConfigurationManager
from .CriticalPointManager import CriticalPointManager
from .DomainFields import ClosedOneForm, TiltedDrift
from .Errors import ConfigurationError, InputError
from .FokkerPlanckSolver import FokkerPlanckSolver
from .MergeTreeManager import MergeTreeManager
from .MorseGraphManager import MorseGraphManager
from .OutputManager import OutputManager
from .PathSimulator import PathSimulator
from .SolveCache import SolveCache
from .TreeOptimizer import TreeOptimizer, read_edge_csv


class RunManager:
    """Executes one validated RunConfig and writes its artifacts."""

    def __init__(self, config_manager: ConfigurationManager, logger: logging.Logger,
                 console: Optional[Console] = None, progress: bool = True):
        self.config_manager = config_manager
        self.config = config_manager.config
        self.logger = logger
        self.console = console or Console()
        self.progress = progress
        SolveCache(self.config['performance']['cache_entries'])
        self.handlers: Dict[str, Callable[[Dict[str, Any], OutputManager], Dict[str, Any]]] = {
            'critical-points': self._critical_points,
            'morse-graph': self._morse_graph,
            'hstar': self._hstar,
            'theorem5': self._theorem5,
            'tree-stationary': self._tree_stationary,
            'merge-tree': self._merge_tree,
            'action-min': self._action_min,
            'fp-flux': self._fp_flux,
            'sde-flux': self._sde_flux,
            'asymptotics': self._asymptotics,
            'nr-demo': self._nr_demo,
            'measure-heights': self._measure_heights,
        }

    # --- plumbing ------------------------------------------------------------------

    def run(self, run_config: Dict[str, Any]) -> Dict[str, Any]:
        run_config = self.config_manager.validate_run_config(dict(run_config))
        subcommand = run_config['subcommand']
        if subcommand not in self.handlers:
            raise ConfigurationError(f"Unknown subcommand {subcommand!r}", available=sorted(self.handlers))

        started = datetime.now()
        output = OutputManager(run_config['output_directory'], self.logger,
                               run_config['format_version'])
        self.logger.info(f"Running {subcommand} into {output.directory}")
        result = self.handlers[subcommand](run_config, output)
        seeds = {'seed': run_config['seed']} if run_config.get('seed') is not None else {}
        result['manifest'] = str(output.write_manifest(run_config, started, seeds))
        return result

    def _drift(self, run_config: Dict[str, Any], c: Optional[float] = None) -> TiltedDrift:
        spec = run_config.get('potential')
        if not spec:
            raise ConfigurationError("Run configuration lacks a potential")
        drift = TiltedDrift.from_spec(spec, base_directory=str(Path.cwd()))
        c = run_config.get('c') if c is None else c
        direction = run_config.get('direction')
        if c is None and direction is None:
            return drift
        return drift.with_tilt(float(c or 0.0), direction if direction is not None else drift.tilt_direction())

    def _form(self, run_config: Dict[str, Any], drift: TiltedDrift) -> ClosedOneForm:
        name = run_config.get('form')
        if name is None:
            return ClosedOneForm(drift.torus, drift.tilt_direction())
        if isinstance(name, (list, tuple)):
            return ClosedOneForm(drift.torus, [float(v) for v in name])
        return ClosedOneForm.from_name(drift.torus, name)

    def _jobs(self, run_config: Dict[str, Any]) -> int:
        return self.config_manager.get_jobs(run_config.get('jobs'))

    def _section(self, name: str) -> Dict[str, Any]:
        return self.config_manager.section(name)

    # --- graph route ------------------------------------------------------------------

    def _critical_points(self, run_config, output):
        drift = self._drift(run_config)
        finder = CriticalPointManager(drift, self.logger, self._section('critical_points'))
        points = finder.find_critical_points(run_config.get('grid'))
        output.write_csv('critical_points.csv', [cp.as_row() for cp in points],
                         ['x', 'y', 'index', 'tilted_value', 'eig1', 'eig2', 'residual'])
        output.write_json('critical_points.json', finder.report)
        return {'summary': f"{len(points)} critical points", 'count': len(points), **finder.report}

    def _graph(self, drift: TiltedDrift):
        finder = CriticalPointManager(drift, self.logger, self._section('critical_points'))
        points = finder.find_critical_points()
        manager = MorseGraphManager(drift, self.logger, self._section('morse_graph'))
        return manager, manager.build_morse_graph(points)

    def _morse_graph(self, run_config, output):
        drift = self._drift(run_config)
        manager, graph = self._graph(drift)
        check = manager.gains_vs_values_check(graph)
        output.write_csv('morse_edges.csv', graph.edge_rows(),
                         ['edge_id', 'src', 'tgt', 'saddle_x', 'saddle_y', 'gain', 'wind_x', 'wind_y',
                          'reversal_id', 'cocycle', 'tilt_cocycle'])
        output.write_json('morse_graph.json', {'vertices': len(graph.vertices),
                                               'undirected_edges': graph.undirected_count,
                                               'gain_check': check})
        gains = sorted(round(e.gain, 9) for e in graph.edges)
        return {'summary': f"{len(graph.vertices)} vertices, {graph.undirected_count} undirected edges, "
                           f"gains {gains}", 'gains': gains, **check}

    def _hstar(self, run_config, output):
        drift = self._drift(run_config)
        _, graph = self._graph(drift)
        heights = TreeOptimizer(self.logger, self._section('tree')).heights_and_hstar(
            graph.to_weighted_digraph())
        output.write_json('hstar.json', heights)
        output.write_csv('vertex_heights.csv',
                         [{'vertex': v, 'height': h} for v, h in sorted(heights['vertex_heights'].items())])
        return {'summary': str(round(heights['h_star'], 9)), 'h_star': heights['h_star'],
                'witness': heights['witness']}

    def _theorem5(self, run_config, output):
        if not run_config.get('edges'):
            raise InputError("theorem5 needs an edge file")
        g = read_edge_csv(run_config['edges'])
        tree = TreeOptimizer(self.logger, self._section('tree'))
        report = tree.theorem5_exponent(g, strict=False)
        if run_config.get('root') is not None:
            report['rooted_rst'] = tree.min_rooted_spanning_tree(g, root=run_config['root']).describe()
        if run_config.get('sign') is not None:
            report['signed_crst'] = tree.min_cycle_rooted_spanning_tree(g, run_config['sign']).describe()
        report['measure_exponents'] = tree.measure_exponents(g)
        output.write_json('theorem5.json', report)
        exponent = report['exponent']
        shown = 'assumption violated' if exponent is None else f"{exponent:.10g}"
        return {'summary': shown, **report}

    def _tree_stationary(self, run_config, output):
        source = run_config.get('chain') or run_config.get('edges')
        if not source:
            raise InputError("tree-stationary needs a chain file")
        pi = TreeOptimizer(self.logger, self._section('tree')).markov_tree_stationary(read_edge_csv(source))
        output.write_csv('stationary.csv', [{'state': v, 'probability': p} for v, p in pi.items()])
        return {'summary': ', '.join(f"{v}={p:.6g}" for v, p in pi.items()), 'stationary': pi}

    def _merge_tree(self, run_config, output):
        drift = self._drift(run_config)
        _, graph = self._graph(drift)
        heights = TreeOptimizer(self.logger, self._section('tree')).heights_and_hstar(
            graph.to_weighted_digraph())
        root = graph.vertices[int(heights['root'][1:])]
        merger = MergeTreeManager(drift, self.logger, self._section('merge_tree'))
        value = merger.hstar_via_merge_tree(root.position, run_config.get('window_periods'),
                                            run_config.get('grid'))
        comparison = ComparisonManager(self.logger, self.console).compare_hstar(
            heights['h_star'], value, merger.report['tolerance'])
        output.write_json('merge_tree.json', {**merger.report, 'graph': comparison})
        if run_config.get('barcode'):
            filtration = merger.build_filtration(root.position, merger.report['window_periods'],
                                                 merger.report['grid_n'])
            output.write_csv('barcode.csv', merger.barcode(filtration),
                             ['birth', 'death', 'birth_x', 'birth_y'])
        return {'summary': f"{value:.10g}", 'h_star': value, 'comparison': comparison}

    # --- action ----------------------------------------------------------------------------

    def _default_endpoints(self, drift: TiltedDrift):
        """Root vertex to the saddle of its cheapest outgoing Morse edge, in the root's lift."""
        _, graph = self._graph(drift)
        digraph = graph.to_weighted_digraph()
        root = TreeOptimizer(self.logger, self._section('tree')).min_rooted_spanning_tree(digraph).root
        index = int(root[1:])
        edge = min((e for e in graph.edges if e.source == index), key=lambda e: e.gain)
        start = graph.lifted_position(edge.source, edge.source_lift)
        return start, edge.saddle.position, edge.gain

    def _action_min(self, run_config, output):
        drift = self._drift(run_config)
        reference = None
        if run_config.get('start') is None or run_config.get('end') is None:
            start, end, reference = self._default_endpoints(drift)
        else:
            start, end = np.asarray(run_config['start'], float), np.asarray(run_config['end'], float)

        settings = self._section('action')
        manager = ActionManager(drift, self.logger, settings)
        best = manager.quasipotential_upper_bound(start, end, run_config.get('T_list') or settings['T_list'],
                                                  run_config.get('knots_n'), jobs=self._jobs(run_config))
        output.write_csv('action_path.csv', best.path.as_rows(), ['t', 'x', 'y'])
        output.write_csv('action_sweep.csv', best.candidates, ['T', 'value', 'converged', 'initialisation'])
        report = {**best.describe(), 'start': start, 'end': end, 'gain': reference,
                  'identity_residual': manager.identity_residual(best.path),
                  'lower_bound_gap': manager.lower_bound_gap(best.path)}
        output.write_json('action.json', report)
        return {'summary': f"upper bound {best.value:.10g} at T={best.T}", **report}

    # --- flux routes ---------------------------------------------------------------------

    def _fp_flux(self, run_config, output):
        drift = self._drift(run_config, c=0.0)
        manager = AsymptoticsManager(self.logger, self.config, progress=self.progress)
        form = self._form(run_config, drift)
        c_list = run_config.get('c_list') or [run_config.get('c') or 0.0]
        eps_list = run_config.get('eps_list') or [run_config.get('eps') or self._section('asymptotics')['eps_list'][0]]
        result = manager.sweep(drift, c_list, eps_list, run_config.get('grid'), form=form,
                               jobs=self._jobs(run_config), with_hstar=False)
        output.write_csv('fp_flux.csv', result.rows,
                         ['c', 'eps', 'flux', 'minus_eps_log_flux', 'entropy_production', 'div_residual'])
        if result.skipped:
            output.write_csv('fp_flux_skipped.csv', result.skipped, ['c', 'eps', 'skipped'])
        if run_config.get('dump'):
            solver = manager.solver
            for row in result.rows:
                field_ = solver.solve_stationary(drift.with_tilt(row['c'], drift.tilt_direction()),
                                                 row['eps'], run_config.get('grid'))
                paths = solver.dump(field_, output.path(f"field_c{row['c']:g}_eps{row['eps']:g}"))
                output.register(*paths.values())
        return {'summary': f"{len(result.rows)} flux values, {len(result.skipped)} skipped",
                'rows': result.rows}

    def _sde_flux(self, run_config, output):
        drift = self._drift(run_config)
        settings = self._section('sde')
        eps = run_config.get('eps')
        if eps is None:
            raise InputError("sde-flux needs eps")
        form = self._form(run_config, drift)
        seed = run_config.get('seed', settings['seed'])
        run_config['seed'] = seed
        estimate = PathSimulator(drift, self.logger, settings).estimate_flux(
            form, eps, run_config.get('dt'), run_config.get('T'), run_config.get('batch'), seed,
            jobs=self._jobs(run_config))
        row = {'c': drift.c, 'eps': eps, 'mean': estimate.value, 'stderr': estimate.uncertainty,
               **estimate.details}
        result = {'summary': f"{estimate.value:.6g} +/- {estimate.uncertainty:.2g}", **row}

        if run_config.get('compare'):
            solver = FokkerPlanckSolver(self.logger, self._section('fokker_planck'))
            reference = solver.flux(solver.solve_stationary(drift, eps, run_config.get('grid')), form)
            comparator = ComparisonManager(self.logger, self.console)
            report = comparator.compare_flux_estimates(reference, estimate)
            comparator.print_comparison_report([report])
            row.update({'fp_flux': reference.value, 'z_score': report['z_score']})
            result['comparison'] = report
        output.write_csv('sde_flux.csv', [row])
        return result

    def _asymptotics(self, run_config, output):
        drift = self._drift(run_config, c=0.0)
        manager = AsymptoticsManager(self.logger, self.config, progress=self.progress)
        result = manager.sweep(drift, run_config.get('c_list'), run_config.get('eps_list'),
                               run_config.get('grid'), form=self._form(run_config, drift),
                               jobs=self._jobs(run_config), merge_tree=bool(run_config.get('compare')))
        output.write_csv('asymptotics.csv', result.rows,
                         ['c', 'eps', 'flux', 'minus_eps_log_flux', 'hstar_graph', 'hstar_merge_tree',
                          'entropy_production', 'div_residual'])
        output.write_csv('asymptotics_long.csv', result.long_format(), ['series', 'x', 'y'])
        output.write_csv('hstar_curve.csv', result.curve.rows,
                         ['c', 'hstar', 'witness', 'vertex_x', 'vertex_y', 'hstar_merge_tree',
                          'root_continued', 'flag'])
        fits = [{'c': c, **(fit or {})} for c, fit in sorted(result.extrapolation.items())]
        output.write_csv('extrapolation.csv', fits, ['c', 'psi', 'slope', 'residual', 'points'])
        output.write_json('asymptotics.json', {'increasing': result.curve.increasing,
                                               'slope_at_zero': result.curve.slope_at_zero,
                                               'skipped': result.skipped})
        return {'summary': f"{len(result.rows)} sweep points, h* increasing: {result.curve.increasing}",
                'increasing': result.curve.increasing, 'slope_at_zero': result.curve.slope_at_zero}

    def _nr_demo(self, run_config, output):
        drift = self._drift(run_config, c=0.0)
        manager = AsymptoticsManager(self.logger, self.config, progress=self.progress)
        if run_config.get('c1') is not None and run_config.get('c2') is not None:
            eps = run_config.get('eps')
            if eps is None:
                raise InputError("nr-demo with c1 and c2 needs eps")
            report = manager.negative_resistance_demo(drift, float(run_config['c1']), float(run_config['c2']),
                                                      float(eps), run_config.get('grid'))
            verdict = report['verdict']
        else:
            settings = self._section('asymptotics')
            report = manager.find_negative_resistance_pair(
                drift, run_config.get('c_list') or settings['c_list'],
                run_config.get('eps_list') or settings['eps_list'],
                run_config.get('grid'), jobs=self._jobs(run_config))
            verdict = report['found']
        output.write_json('nr_demo.json', report)
        mark = "✅ negative resistance" if verdict else "❌ no negative resistance"
        return {'summary': mark, **report}

    def _measure_heights(self, run_config, output):
        drift = self._drift(run_config)
        eps, r = run_config.get('eps'), run_config.get('r')
        if eps is None or r is None:
            raise InputError("measure-heights needs eps and r")
        manager = AsymptoticsManager(self.logger, self.config, progress=False)
        report = manager.measure_heights_check(drift, float(eps), float(r), run_config.get('grid'),
                                               self._section('asymptotics')['exponent_tolerance'])
        output.write_csv('measure_heights.csv', report['rows'],
                         ['vertex', 'x', 'y', 'height', 'measure_exponent', 'mass',
                          'minus_eps_log_mass', 'passed'])
        mark = "✅ heights match" if report['passed'] else "❌ heights differ"
        return {'summary': mark, 'passed': report['passed']}
