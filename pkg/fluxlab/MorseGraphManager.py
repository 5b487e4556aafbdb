# fluxlab/MorseGraphManager.py

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import networkx as nx
import numpy as np

from .ConfigurationManager import DEFAULT_CONFIG
from .CriticalPointManager import CriticalPoint, CriticalPointManager
from .DomainFields import TiltedDrift
from .Errors import AmbiguousTarget, EscapeTimeout, GainMismatch, IncompleteSweep, InputError
from .TreeOptimizer import GraphEdge, WeightedDigraph


@dataclass
class HalfEdgeTrace:
    """One branch of a saddle's unstable manifold, traced on the cover."""
    saddle: int
    branch: int
    vertex: int
    lift: np.ndarray
    trajectory: np.ndarray
    integral: float

    @property
    def end_point(self) -> np.ndarray:
        return self.trajectory[-1]


@dataclass
class MorseEdge:
    id: str
    source: int
    target: int
    saddle: CriticalPoint
    gain: float
    winding: np.ndarray
    reversal_id: str
    undirected: int
    source_lift: np.ndarray
    target_lift: np.ndarray
    quadrature_gain: float


@dataclass
class MorseGraph:
    vertices: List[CriticalPoint]
    edges: List[MorseEdge]
    drift: TiltedDrift

    def vertex_id(self, i: int) -> str:
        return f"v{i}"

    @property
    def undirected_count(self) -> int:
        return len({e.undirected for e in self.edges})

    def q(self, edge_id: str) -> int:
        return next(e.undirected for e in self.edges if e.id == edge_id)

    def lifted_position(self, vertex: int, lift: np.ndarray) -> np.ndarray:
        return self.vertices[vertex].position + lift * self.drift.torus.L

    def to_weighted_digraph(self, direction: Optional[Sequence[float]] = None) -> WeightedDigraph:
        """Gains as weights; cocycle Ũ(src lift) - Ũ(tgt lift), tilt cocycle beta . displacement."""
        beta = (np.asarray(direction, dtype=float) / np.linalg.norm(direction)
                if direction is not None else self.drift.tilt_direction())
        edges = []
        for e in self.edges:
            src = self.lifted_position(e.source, e.source_lift)
            tgt = self.lifted_position(e.target, e.target_lift)
            edges.append(GraphEdge(
                id=e.id,
                src=self.vertex_id(e.source),
                tgt=self.vertex_id(e.target),
                weight=float(e.gain),
                cocycle=float(self.drift.tilted_value(src) - self.drift.tilted_value(tgt)),
                reversal_id=e.reversal_id,
                tilt_cocycle=float(beta @ (tgt - src))
            ))
        return WeightedDigraph([self.vertex_id(i) for i in range(len(self.vertices))], edges)

    def edge_rows(self) -> List[Dict[str, Any]]:
        graph = self.to_weighted_digraph()
        rows = []
        for e in self.edges:
            g_edge = graph.edge(e.id)
            pos = list(e.saddle.position) + [0.0] * (2 - len(e.saddle.position))
            wind = list(e.winding) + [0] * (2 - len(e.winding))
            rows.append({
                'edge_id': e.id, 'src': g_edge.src, 'tgt': g_edge.tgt,
                'saddle_x': float(pos[0]), 'saddle_y': float(pos[1]),
                'gain': float(e.gain), 'wind_x': int(wind[0]), 'wind_y': int(wind[1]),
                'reversal_id': e.reversal_id,
                'cocycle': g_edge.cocycle, 'tilt_cocycle': g_edge.tilt_cocycle
            })
        return rows


class MorseGraphManager:
    """Traces unstable manifolds of index-1 zeros into the sinks they connect."""

    def __init__(self, drift: TiltedDrift, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None):
        self.drift = drift
        self.torus = drift.torus
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['morse_graph'], **(settings or {})}

    def _nearest_vertices(self, points: np.ndarray, sinks: np.ndarray) -> np.ndarray:
        """Torus distances from each point to each sink, shape (points, sinks)."""
        return self.torus.distance(points[:, None, :], sinks[None, :, :])

    def _direction(self, x: np.ndarray) -> np.ndarray:
        v = self.drift.eval_drift(x)
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        return v / np.maximum(norm, 1e-300)

    def trace_branches(self, saddles: List[CriticalPoint],
                       sinks: List[CriticalPoint]) -> List[HalfEdgeTrace]:
        """Arclength-parametrised RK4 along both unstable branches of every saddle, batched."""
        L = self.torus.min_period
        offset = self.settings['offset_factor'] * L
        step_max = self.settings['step_factor'] * L
        trap = self.settings['trap_factor'] * L
        max_steps = int(self.settings['max_length_periods'] / self.settings['step_factor'])
        sink_pos = np.array([cp.position for cp in sinks])

        starts, owners = [], []
        for k, cp in enumerate(saddles):
            hess = -self.drift.jacobian(cp.position)
            eigs, vecs = np.linalg.eigh(0.5 * (hess + hess.T))
            unstable = vecs[:, int(np.argmin(eigs))]
            for branch in (1, -1):
                starts.append(cp.position + branch * offset * unstable)
                owners.append((k, branch))

        x = np.array(starts, dtype=float)
        paths = [[p.copy()] for p in x]
        integrals = np.zeros(len(x))
        active = np.ones(len(x), dtype=bool)
        hit = np.full(len(x), -1)
        contested = np.zeros(len(x), dtype=bool)
        contested_budget = 10 * max_steps

        steps = 0
        while np.any(active):
            steps += 1
            idx = np.flatnonzero(active)
            xa = x[idx]
            distances = self._nearest_vertices(xa, sink_pos)
            nearest = distances.min(axis=1)
            # shrink the step near a sink so the trapping ball cannot be stepped over
            h = np.minimum(step_max, 0.25 * np.maximum(nearest, trap))[:, None]

            k1 = self._direction(xa)
            k2 = self._direction(xa + 0.5 * h * k1)
            k3 = self._direction(xa + 0.5 * h * k2)
            k4 = self._direction(xa + h * k3)
            xn = xa + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

            # trapezoidal integral of -drift along the step
            va = self.drift.eval_drift(xa)
            vn = self.drift.eval_drift(xn)
            integrals[idx] -= 0.5 * np.einsum('ij,ij->i', va + vn, xn - xa)
            x[idx] = xn
            for j, i in enumerate(idx):
                paths[i].append(xn[j].copy())

            distances = self._nearest_vertices(xn, sink_pos)
            inside = distances < trap
            counts = inside.sum(axis=1)
            for j, i in enumerate(idx):
                contested[i] = counts[j] > 1
                if counts[j] == 1:
                    hit[i] = int(np.argmax(inside[j]))
                    active[i] = False

            if steps >= max_steps and np.any(active):
                waiting = np.flatnonzero(active & ~contested)
                if waiting.size:
                    raise EscapeTimeout("Unstable branch did not reach a sink",
                                        branches=[owners[i] for i in waiting],
                                        max_length_periods=self.settings["max_length_periods"])
                if steps >= contested_budget:
                    i = int(np.flatnonzero(active)[0])
                    raise AmbiguousTarget("Unstable branch ends near several sinks",
                                          saddle=owners[i][0], branch=owners[i][1])

        traces = []
        for i, (k, branch) in enumerate(owners):
            vertex = int(hit[i])
            end = x[i]
            lift = np.rint((end - sinks[vertex].position) / self.torus.L).astype(int)
            anchor = sinks[vertex].position + lift * self.torus.L
            # straight tail into the sink; the drift vanishes there
            integrals[i] -= 0.5 * float(self.drift.eval_drift(end) @ (anchor - end))
            trajectory = np.vstack(paths[i] + [anchor])
            traces.append(HalfEdgeTrace(saddle=k, branch=branch, vertex=vertex, lift=lift,
                                        trajectory=trajectory, integral=float(integrals[i])))
        return traces

    def build_morse_graph(self, critical_points: List[CriticalPoint]) -> MorseGraph:
        sinks = [cp for cp in critical_points if cp.is_minimum]
        saddles = [cp for cp in critical_points if cp.is_saddle]
        if not sinks:
            raise IncompleteSweep("No index-0 zeros to serve as Morse vertices")

        traces = self.trace_branches(saddles, sinks) if saddles else []
        edges: List[MorseEdge] = []
        for k, saddle in enumerate(saddles):
            a, b = [t for t in traces if t.saddle == k]
            saddle_value = float(self.drift.tilted_value(saddle.position))
            for source, target, name, reverse in ((a, b, f"e{k}", f"e{k}_bar"),
                                                  (b, a, f"e{k}_bar", f"e{k}")):
                source_point = sinks[source.vertex].position + source.lift * self.torus.L
                gain = saddle_value - float(self.drift.tilted_value(source_point))
                if gain <= 0:
                    raise GainMismatch("Non-positive gain on a traced edge", edge=name, gain=gain)
                edges.append(MorseEdge(
                    id=name, source=source.vertex, target=target.vertex, saddle=saddle,
                    gain=gain, winding=target.lift - source.lift, reversal_id=reverse,
                    undirected=k, source_lift=source.lift, target_lift=target.lift,
                    quadrature_gain=-source.integral
                ))

        graph = MorseGraph(vertices=sinks, edges=edges, drift=self.drift)
        self._check_connected(graph)
        self.logger.info(
            f"Morse graph: {len(sinks)} vertices, {graph.undirected_count} undirected edges, "
            f"gains {sorted(round(e.gain, 6) for e in edges)}"
        )
        return graph

    def _check_connected(self, graph: MorseGraph) -> None:
        undirected = nx.MultiGraph()
        undirected.add_nodes_from(range(len(graph.vertices)))
        undirected.add_edges_from((e.source, e.target) for e in graph.edges)
        if not nx.is_connected(undirected):
            raise IncompleteSweep("Undirected Morse graph is disconnected",
                                  components=nx.number_connected_components(undirected))

    def gains_vs_values_check(self, graph: MorseGraph, tolerance: float = None,
                              quadrature_tolerance: float = None) -> Dict[str, Any]:
        """
        Compare gains with Ũ differences at re-polished critical points.

        The stored gain is itself a Ũ difference, so its residual only confirms the
        endpoints and deck lift. The independent check is the quadrature of -alpha
        along the traced unstable branch, which must land within quadrature_tolerance.
        """
        tolerance = self.settings['gain_tol'] if tolerance is None else tolerance
        if quadrature_tolerance is None:
            quadrature_tolerance = self.settings['quadrature_tol']
        finder = CriticalPointManager(self.drift, self.logger)

        def polish(point: np.ndarray) -> np.ndarray:
            refined, _ = finder.newton(point[None, :])
            return refined[0]

        worst = 0.0
        worst_quadrature = 0.0
        for e in graph.edges:
            saddle = polish(e.saddle.position)
            source = polish(graph.vertices[e.source].position) + e.source_lift * self.torus.L
            expected = float(self.drift.tilted_value(saddle) - self.drift.tilted_value(source))
            worst = max(worst, abs(e.gain - expected))
            worst_quadrature = max(worst_quadrature, abs(e.quadrature_gain - expected))

        report = {'max_residual': worst, 'max_quadrature_residual': worst_quadrature,
                  'edges': len(graph.edges)}
        self.logger.info(f"Gain check: max residual {worst:.3e}, quadrature residual {worst_quadrature:.3e}")
        if worst >= tolerance:
            raise GainMismatch("Gains disagree with tilted potential differences", **report)
        if worst_quadrature >= quadrature_tolerance:
            raise GainMismatch("Branch quadrature disagrees with tilted potential differences",
                               quadrature_tolerance=quadrature_tolerance, **report)
        return report


def build_morse_graph(drift: TiltedDrift, critical_points: List[CriticalPoint],
                      logger: Optional[logging.Logger] = None) -> MorseGraph:
    return MorseGraphManager(drift, logger).build_morse_graph(critical_points)


def gains_vs_values_check(graph: MorseGraph, drift: TiltedDrift) -> Dict[str, Any]:
    if graph.drift.torus != drift.torus:
        raise InputError("Graph and drift live on different tori")
    return MorseGraphManager(drift).gains_vs_values_check(graph)
