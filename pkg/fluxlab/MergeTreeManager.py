# fluxlab/MergeTreeManager.py

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, minimum_spanning_tree

from .ConfigurationManager import DEFAULT_CONFIG
from .DomainFields import TiltedDrift
from .Errors import ExactFormNoFlux, IncompleteSweep, InputError, WindowTooSmall


@dataclass
class Filtration:
    """Sublevel filtration of Ũ on a cover window, reduced to its minimum spanning tree."""
    values: np.ndarray
    mesh: np.ndarray
    spacing: np.ndarray
    window_periods: np.ndarray
    grid_n: int
    center: np.ndarray
    ocean: int
    ocean_face: str
    predecessors: np.ndarray
    mst: Any
    offset: float

    @property
    def shape(self):
        return self.values.shape


class MergeTreeManager:
    """h* as the relative height of the exceptional merge of v*'s sublevel component."""

    def __init__(self, drift: TiltedDrift, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None):
        self.drift = drift
        self.torus = drift.torus
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['merge_tree'], **(settings or {})}
        self.report: Dict[str, Any] = {}

    def _window(self, window_periods: Union[int, Sequence[int]]) -> np.ndarray:
        window = np.broadcast_to(np.asarray(window_periods, dtype=int), (self.torus.dim,)).copy()
        if np.any(window < 1):
            raise InputError("Window needs at least one period per axis", window=window.tolist())
        return window

    def build_filtration(self, v_star: Sequence[float], window_periods: Union[int, Sequence[int]],
                         grid_n: int) -> Filtration:
        window = self._window(window_periods)
        spacing = self.torus.L / grid_n
        shape = window * grid_n
        center = shape // 2
        v_star = np.asarray(v_star, dtype=float).reshape(self.torus.dim)

        axes = [v_star[k] + (np.arange(shape[k]) - center[k]) * spacing[k] for k in range(self.torus.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
        values = self.drift.tilted_value(mesh)

        index = np.arange(values.size).reshape(shape)
        offset = float(values.min()) - 1.0
        # shifted weights stay strictly positive; csgraph treats zero as a missing edge
        rows, cols, weights = [], [], []
        for axis in range(self.torus.dim):
            lo = tuple(slice(None, -1) if k == axis else slice(None) for k in range(self.torus.dim))
            hi = tuple(slice(1, None) if k == axis else slice(None) for k in range(self.torus.dim))
            a, b = index[lo].ravel(), index[hi].ravel()
            rows.append(a)
            cols.append(b)
            weights.append(np.maximum(values.flat[a], values.flat[b]) - offset)

        faces = {}
        for axis in range(self.torus.dim):
            for side, position in (('low', 0), ('high', -1)):
                nodes = np.take(index, position, axis=axis).ravel()
                faces[f"{side}_{axis}"] = (float(values.flat[nodes].mean()), nodes)
        face_name = min(faces, key=lambda name: faces[name][0])
        face_nodes = faces[face_name][1]

        ocean = values.size
        rows.append(face_nodes)
        cols.append(np.full(face_nodes.size, ocean))
        weights.append(values.flat[face_nodes] - offset)

        graph = coo_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ocean + 1, ocean + 1)
        ).tocsr()
        mst = minimum_spanning_tree(graph)
        _, predecessors = breadth_first_order(mst, ocean, directed=False, return_predecessors=True)

        self.logger.debug(f"Filtration on {shape.tolist()} nodes, ocean attached to face {face_name}")
        return Filtration(values=values, mesh=mesh, spacing=spacing, window_periods=window,
                          grid_n=grid_n, center=center, ocean=ocean, ocean_face=face_name,
                          predecessors=predecessors, mst=mst, offset=offset)

    def _descend(self, filtration: Filtration, node: np.ndarray) -> np.ndarray:
        """Steepest 4-neighbour descent on the grid to a local minimum."""
        values = filtration.values
        node = node.copy()
        while True:
            best = node
            best_value = values[tuple(node)]
            for axis in range(self.torus.dim):
                for step in (-1, 1):
                    candidate = node.copy()
                    candidate[axis] += step
                    if 0 <= candidate[axis] < values.shape[axis] and values[tuple(candidate)] < best_value:
                        best, best_value = candidate, values[tuple(candidate)]
            if best is node:
                return node
            node = best

    def exceptional_merge(self, filtration: Filtration, node: np.ndarray) -> float:
        """Minimax value over the tree path from node to the ocean."""
        flat = int(np.ravel_multi_index(tuple(node), filtration.shape))
        value = float(filtration.values.flat[flat])
        x = flat
        while True:
            x = int(filtration.predecessors[x])
            if x < 0:
                raise IncompleteSweep("Grid node is not connected to the unbounded component")
            if x == filtration.ocean:
                return value
            value = max(value, float(filtration.values.flat[x]))

    def relative_heights(self, filtration: Filtration) -> Dict[tuple, float]:
        """Relative exceptional-merge height for every lift of v* at least one period from the faces."""
        n = filtration.grid_n
        reach = filtration.window_periods // 2 + 1
        heights = {}
        ranges = [range(-int(r), int(r) + 1) for r in reach]
        for k in np.array(np.meshgrid(*ranges, indexing='ij')).reshape(self.torus.dim, -1).T:
            node = filtration.center + k * n
            if np.any(node - n < 0) or np.any(node + n > np.asarray(filtration.shape) - 1):
                continue
            lift = filtration.mesh[tuple(node)]
            birth = self._descend(filtration, node)
            merge = self.exceptional_merge(filtration, birth)
            heights[tuple(int(i) for i in k)] = merge - float(self.drift.tilted_value(lift))
        return heights

    def grid_tolerance(self, grid_n: int) -> float:
        spacing = float(np.max(self.torus.L / grid_n))
        return 4.0 * spacing * self.drift.max_speed()

    def hstar_via_merge_tree(self, v_star: Sequence[float],
                             window_periods: Optional[Union[int, Sequence[int]]] = None,
                             grid_n: Optional[int] = None) -> float:
        if np.all(self.drift.tilt == 0.0):
            raise ExactFormNoFlux("Zero tilt has no unbounded sublevel component")
        grid_n = int(grid_n or self.settings['grid_n'])
        window = self._window(window_periods or self.settings['window_periods'])
        tolerance = self.grid_tolerance(grid_n)

        def central_height(w):
            filtration = self.build_filtration(v_star, w, grid_n)
            heights = self.relative_heights(filtration)
            if not heights:
                raise WindowTooSmall("No lift of v* lies a full period inside the window",
                                     window=w.tolist())
            values = list(heights.values())
            return heights.get(tuple([0] * self.torus.dim), values[0]), float(np.ptp(values))

        previous, _ = central_height(window)
        while True:
            grown = window + 1
            if np.max(grown) > self.settings['max_window_periods']:
                raise WindowTooSmall("Exceptional merge height did not stabilise",
                                     window=window.tolist(), tolerance=tolerance)
            current, spread = central_height(grown)
            if abs(current - previous) <= tolerance:
                break
            window, previous = grown, current

        self.report = {'h_star': current, 'window_periods': grown.tolist(), 'grid_n': grid_n,
                       'tolerance': tolerance, 'lift_spread': spread,
                       'change_on_growth': abs(current - previous)}
        self.logger.info(f"Merge-tree h* = {current:.6f} on a {grown.tolist()} window "
                         f"(lift spread {spread:.2e}, tolerance {tolerance:.2e})")
        return current

    def barcode(self, filtration: Filtration) -> List[Dict[str, float]]:
        """PH0 bars by ascending union-find over the tree edges (elder rule)."""
        tree = filtration.mst.tocoo()
        order = np.argsort(tree.data, kind='stable')
        size = filtration.values.size + 1
        parent = np.arange(size)
        birth = np.append(filtration.values.ravel(), -np.inf)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        bars = []
        coords = filtration.mesh.reshape(-1, self.torus.dim)
        for e in order:
            ri, rj = find(int(tree.row[e])), find(int(tree.col[e]))
            if ri == rj:
                continue
            death = float(tree.data[e]) + filtration.offset
            # roots are the minima of their components
            elder, younger = (ri, rj) if birth[ri] <= birth[rj] else (rj, ri)
            if death > birth[younger]:
                bars.append(self._bar(birth[younger], death, coords[younger]))
            parent[younger] = elder

        # the unbounded component never dies; report its lowest visible sample
        visible = int(np.argmin(filtration.values))
        bars.append(self._bar(float(filtration.values.flat[visible]), np.inf, coords[visible]))
        return bars

    def _bar(self, birth: float, death: float, at: np.ndarray) -> Dict[str, float]:
        at = list(at) + [0.0] * (2 - len(at))
        return {'birth': float(birth), 'death': float(death),
                'birth_x': float(at[0]), 'birth_y': float(at[1])}


def hstar_via_merge_tree(drift: TiltedDrift, v_star: Sequence[float],
                         window_periods: Union[int, Sequence[int]] = 3, grid_n: int = 512) -> float:
    return MergeTreeManager(drift).hstar_via_merge_tree(v_star, window_periods, grid_n)
