# fluxlab/TreeOptimizer.py

import csv
import logging
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .ConfigurationManager import DEFAULT_CONFIG
from .Errors import (AmbiguousMinimum, AssumptionViolated, ConfigurationError, ExactFormNoFlux,
                     InputError, InvalidChain, NoArborescence, NonConvergence, NoSignedCycle,
                     ReducibleChain)


@dataclass(frozen=True)
class GraphEdge:
    id: str
    src: str
    tgt: str
    weight: float
    cocycle: float = 0.0
    reversal_id: Optional[str] = None
    tilt_cocycle: Optional[float] = None

    @property
    def is_loop(self) -> bool:
        return self.src == self.tgt

    @property
    def finite(self) -> bool:
        return math.isfinite(self.weight)


class WeightedDigraph:
    """Finite directed multigraph with nonnegative (possibly infinite) weights and an edge cocycle."""

    def __init__(self, vertices: Iterable[str], edges: Iterable[GraphEdge]):
        self.vertices: List[str] = list(dict.fromkeys(vertices))
        self.edges: List[GraphEdge] = list(edges)
        self._by_id: Dict[str, GraphEdge] = {}
        self._out: Dict[str, List[GraphEdge]] = defaultdict(list)

        vertex_set = set(self.vertices)
        for e in self.edges:
            if e.id in self._by_id:
                raise InputError(f"Duplicate edge id {e.id!r}")
            if e.src not in vertex_set or e.tgt not in vertex_set:
                raise InputError(f"Edge {e.id!r} references an unknown vertex", src=e.src, tgt=e.tgt)
            if math.isnan(e.weight) or e.weight < 0:
                raise InputError(f"Edge {e.id!r} has an invalid weight", weight=e.weight)
            self._by_id[e.id] = e
            self._out[e.src].append(e)

        for e in self.edges:
            if e.reversal_id is None:
                continue
            rev = self._by_id.get(e.reversal_id)
            if rev is None or rev.reversal_id != e.id or rev.src != e.tgt or rev.tgt != e.src:
                raise InputError(f"Reversal pairing of edge {e.id!r} is not an involution",
                                 reversal_id=e.reversal_id)

    def __len__(self) -> int:
        return len(self.vertices)

    def edge(self, edge_id: str) -> GraphEdge:
        return self._by_id[edge_id]

    def out_edges(self, vertex: str) -> List[GraphEdge]:
        return self._out.get(vertex, [])

    @property
    def has_reversals(self) -> bool:
        return bool(self.edges) and all(e.reversal_id is not None for e in self.edges)

    @property
    def has_tilt_cocycle(self) -> bool:
        return bool(self.edges) and all(e.tilt_cocycle is not None for e in self.edges)

    def to_networkx(self) -> nx.MultiDiGraph:
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(self.vertices)
        for e in self.edges:
            graph.add_edge(e.src, e.tgt, key=e.id, weight=e.weight, cocycle=e.cocycle)
        return graph

    def is_connected(self) -> bool:
        if not self.vertices:
            return False
        return nx.is_weakly_connected(self.to_networkx())


@dataclass
class TreeResult:
    tree: FrozenSet[str]
    root: Optional[str]
    total_weight: float
    unique: bool
    runner_up_gap: float

    def describe(self) -> Dict[str, Any]:
        return {
            'tree': sorted(self.tree), 'root': self.root, 'total_weight': self.total_weight,
            'unique': self.unique, 'runner_up_gap': self.runner_up_gap
        }


@dataclass
class CycleTreeResult(TreeResult):
    cycle: Tuple[str, ...] = field(default_factory=tuple)
    cycle_cocycle: float = 0.0
    sign: int = 0

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), 'cycle': list(self.cycle),
                'cycle_cocycle': self.cycle_cocycle, 'sign': self.sign}


class _BudgetExceeded(Exception):
    pass


class _TopTwo:
    """Best and runner-up (total, payload) seen so far."""

    def __init__(self):
        self.entries: List[Tuple[float, Any]] = []

    @property
    def bound(self) -> float:
        return self.entries[1][0] if len(self.entries) > 1 else math.inf

    def offer(self, total: float, payload: Any):
        self.entries.append((total, payload))
        self.entries.sort(key=lambda item: item[0])
        del self.entries[2:]


class TreeOptimizer:
    """Rooted and cycle-rooted spanning tree optimisation, heights and flux exponents."""

    def __init__(self, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None):
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['tree'], **(settings or {})}
        self.tie_tol = float(self.settings['tie_tol'])

    # --- exhaustive search -------------------------------------------------

    def _rst_search(self, g: WeightedDigraph, root: str, found: _TopTwo, budget: List[int]):
        others = [v for v in g.vertices if v != root]
        choices = {}
        for u in others:
            options = sorted((e for e in g.out_edges(u) if not e.is_loop and e.finite),
                             key=lambda e: e.weight)
            if not options:
                return
            choices[u] = options
        # suffix sums of cheapest out-edges bound the unassigned remainder
        lower = [0.0] * (len(others) + 1)
        for i in range(len(others) - 1, -1, -1):
            lower[i] = lower[i + 1] + choices[others[i]][0].weight

        assigned: Dict[str, str] = {}
        chosen: List[str] = []

        def closes_cycle(u: str, w: str) -> bool:
            x = w
            while x in assigned:
                x = assigned[x]
                if x == u:
                    return True
            return x == u

        def descend(i: int, partial: float):
            budget[0] += 1
            if budget[0] > self.settings['enumeration_limit']:
                raise _BudgetExceeded()
            if i == len(others):
                found.offer(partial, (root, frozenset(chosen)))
                return
            u = others[i]
            for e in choices[u]:
                if partial + e.weight + lower[i + 1] >= found.bound:
                    break
                if closes_cycle(u, e.tgt):
                    continue
                assigned[u] = e.tgt
                chosen.append(e.id)
                descend(i + 1, partial + e.weight)
                chosen.pop()
                del assigned[u]

        descend(0, 0.0)

    def _crst_search(self, g: WeightedDigraph, sign: int, found: _TopTwo, budget: List[int]):
        order = list(g.vertices)
        choices = {}
        for u in order:
            options = sorted((e for e in g.out_edges(u) if e.finite), key=lambda e: e.weight)
            if not options:
                return
            choices[u] = options
        lower = [0.0] * (len(order) + 1)
        for i in range(len(order) - 1, -1, -1):
            lower[i] = lower[i + 1] + choices[order[i]][0].weight

        assigned: Dict[str, GraphEdge] = {}
        chosen: List[str] = []
        state = {'cycle': None}

        def cycle_through(u: str, e: GraphEdge) -> Optional[List[GraphEdge]]:
            path = [e]
            seen = set()
            x = e.tgt
            while x != u:
                # running into the existing cycle means u only joins its component
                if x not in assigned or x in seen:
                    return None
                seen.add(x)
                path.append(assigned[x])
                x = assigned[x].tgt
            return path

        def descend(i: int, partial: float):
            budget[0] += 1
            if budget[0] > self.settings['enumeration_limit']:
                raise _BudgetExceeded()
            if i == len(order):
                if state['cycle'] is not None:
                    found.offer(partial, (frozenset(chosen), state['cycle']))
                return
            u = order[i]
            for e in choices[u]:
                if partial + e.weight + lower[i + 1] >= found.bound:
                    break
                cycle = cycle_through(u, e)
                if cycle is not None:
                    # a second cycle disconnects the functional graph
                    if state['cycle'] is not None or self._cycle_sign(cycle) != sign:
                        continue
                    state['cycle'] = tuple(cycle)
                assigned[u] = e
                chosen.append(e.id)
                descend(i + 1, partial + e.weight)
                chosen.pop()
                del assigned[u]
                if cycle is not None:
                    state['cycle'] = None

        descend(0, 0.0)

    def _cycle_sign(self, cycle: Sequence[GraphEdge]) -> int:
        value = sum(e.cocycle for e in cycle)
        if value > self.tie_tol:
            return 1
        if value < -self.tie_tol:
            return -1
        # c = 0+ limit: the tilt direction decides cycles the exact cocycle cannot
        if all(e.tilt_cocycle is not None for e in cycle):
            tilt_value = sum(e.tilt_cocycle for e in cycle)
            if tilt_value > self.tie_tol:
                return 1
            if tilt_value < -self.tie_tol:
                return -1
        return 0

    # --- Edmonds route -----------------------------------------------------

    def _edmonds(self, g: WeightedDigraph, root: Optional[str],
                 excluded: FrozenSet[str] = frozenset()) -> Optional[Tuple[float, str, FrozenSet[str]]]:
        if len(g.vertices) == 1:
            only = g.vertices[0]
            if root not in (None, only):
                return None
            return 0.0, only, frozenset()

        cheapest: Dict[Tuple[str, str], GraphEdge] = {}
        for e in g.edges:
            if e.is_loop or not e.finite or e.id in excluded or e.src == root:
                continue
            key = (e.src, e.tgt)
            if key not in cheapest or e.weight < cheapest[key].weight:
                cheapest[key] = e

        # networkx arborescences point away from the root, ours point toward it
        reversed_graph = nx.DiGraph()
        reversed_graph.add_nodes_from(g.vertices)
        for (src, tgt), e in cheapest.items():
            reversed_graph.add_edge(tgt, src, weight=e.weight, eid=e.id)

        try:
            arborescence = nx.minimum_spanning_arborescence(reversed_graph, attr='weight',
                                                            preserve_attrs=True)
        except nx.NetworkXException:
            return None

        ids = frozenset(d['eid'] for _, _, d in arborescence.edges(data=True))
        if len(ids) != len(g.vertices) - 1:
            return None
        tree_root = next(v for v in arborescence.nodes if arborescence.in_degree(v) == 0)
        return sum(g.edge(i).weight for i in ids), tree_root, ids

    def _rst_edmonds(self, g: WeightedDigraph, root: Optional[str]) -> _TopTwo:
        found = _TopTwo()
        best = self._edmonds(g, root)
        if best is None:
            return found
        total, tree_root, ids = best
        found.offer(total, (tree_root, ids))
        for edge_id in ids:
            alternative = self._edmonds(g, root, excluded=frozenset({edge_id}))
            if alternative is not None:
                found.offer(alternative[0], (alternative[1], alternative[2]))
        return found

    # --- public operations -------------------------------------------------

    def min_rooted_spanning_tree(self, g: WeightedDigraph, root: Optional[str] = None,
                                 method: str = 'auto') -> TreeResult:
        """Minimum-weight arborescence directed toward root (over all roots when root is None)."""
        if not g.vertices:
            raise NoArborescence("Graph has no vertices")
        if root is not None and root not in g.vertices:
            raise InputError(f"Unknown root {root!r}")
        if not g.is_connected():
            raise NoArborescence("Graph is not connected", vertices=len(g.vertices))

        if method not in ('auto', 'exhaustive', 'edmonds'):
            raise ConfigurationError(f"Unknown tree method {method!r}")
        use_exhaustive = method == 'exhaustive' or (
            method == 'auto' and len(g.vertices) <= self.settings['exhaustive_max_vertices'])

        found = None
        if use_exhaustive:
            found = _TopTwo()
            budget = [0]
            try:
                for r in ([root] if root is not None else g.vertices):
                    self._rst_search(g, r, found, budget)
            except _BudgetExceeded:
                if method == 'exhaustive':
                    raise NonConvergence("Arborescence enumeration exceeded its budget",
                                         limit=self.settings['enumeration_limit'])
                self.logger.warning("Arborescence enumeration budget exceeded, using Edmonds")
                found = None
        if found is None:
            found = self._rst_edmonds(g, root)

        if not found.entries:
            raise NoArborescence("No finite-weight arborescence exists", root=root)
        return self._tree_result(found)

    def _tree_result(self, found: _TopTwo) -> TreeResult:
        total, (tree_root, ids) = found.entries[0]
        gap = found.entries[1][0] - total if len(found.entries) > 1 else math.inf
        unique = gap > self.tie_tol
        if not unique:
            self.logger.warning(f"Minimal spanning tree is not unique (runner-up gap {gap:.3e})")
        return TreeResult(tree=ids, root=tree_root, total_weight=total, unique=unique,
                          runner_up_gap=gap)

    def min_cycle_rooted_spanning_tree(self, g: WeightedDigraph, cocycle_sign: Any = '+') -> CycleTreeResult:
        """Minimum-weight CRST whose unique cycle carries cocycle of the requested sign."""
        sign = {'+': 1, '-': -1, 1: 1, -1: -1, 'plus': 1, 'minus': -1}.get(cocycle_sign)
        if sign is None:
            raise ConfigurationError(f"Cocycle sign must be + or -, got {cocycle_sign!r}")
        if not g.vertices:
            raise NoSignedCycle("Graph has no vertices")

        found = _TopTwo()
        budget = [0]
        try:
            self._crst_search(g, sign, found, budget)
        except _BudgetExceeded:
            raise NonConvergence("Cycle-rooted tree enumeration exceeded its budget",
                                 limit=self.settings['enumeration_limit'],
                                 best=found.entries[0] if found.entries else None)

        if not found.entries:
            raise NoSignedCycle("No cycle-rooted spanning tree with the requested sign",
                                sign='+' if sign > 0 else '-')

        total, (ids, cycle) = found.entries[0]
        gap = found.entries[1][0] - total if len(found.entries) > 1 else math.inf
        return CycleTreeResult(
            tree=ids, root=cycle[0].src, total_weight=total, unique=gap > self.tie_tol,
            runner_up_gap=gap, cycle=tuple(e.id for e in cycle),
            cycle_cocycle=sum(e.cocycle for e in cycle), sign=sign
        )

    def _potentials(self, g: WeightedDigraph, tree: TreeResult) -> Tuple[Dict[str, float], Dict[str, float]]:
        """Heights h(v) and tilt potentials along the tree, both zero at the root."""
        incoming: Dict[str, List[GraphEdge]] = defaultdict(list)
        for edge_id in tree.tree:
            e = g.edge(edge_id)
            incoming[e.tgt].append(e)

        heights = {tree.root: 0.0}
        tilt = {tree.root: 0.0}
        queue = deque([tree.root])
        while queue:
            w = queue.popleft()
            for e in incoming[w]:
                heights[e.src] = heights[w] + e.cocycle
                tilt[e.src] = tilt[w] + (e.tilt_cocycle or 0.0)
                queue.append(e.src)
        return heights, tilt

    def vertex_heights(self, g: WeightedDigraph, tree: Optional[TreeResult] = None) -> Dict[str, float]:
        tree = tree or self.min_rooted_spanning_tree(g)
        return self._potentials(g, tree)[0]

    def heights_and_hstar(self, g: WeightedDigraph) -> Dict[str, Any]:
        tree = self.min_rooted_spanning_tree(g)
        if not tree.unique:
            raise AmbiguousMinimum("Minimal rooted spanning tree is not unique",
                                   runner_up_gap=tree.runner_up_gap)

        heights, tilt = self._potentials(g, tree)
        edge_heights = {e.id: heights[e.src] + e.weight for e in g.edges if e.finite}
        use_tilt = g.has_tilt_cocycle

        lower = []
        for e in g.edges:
            if not e.finite:
                continue
            if e.reversal_id is not None and e.reversal_id in edge_heights:
                difference = edge_heights[e.reversal_id] - edge_heights[e.id]
            else:
                # h(ebar) - h(e) equals the cocycle around e closed up through the tree
                difference = e.cocycle + heights[e.tgt] - heights[e.src]
            if difference > self.tie_tol:
                lower.append(e.id)
            elif abs(difference) <= self.tie_tol and use_tilt:
                if e.tilt_cocycle + tilt[e.tgt] - tilt[e.src] > self.tie_tol:
                    lower.append(e.id)

        for v, h in heights.items():
            if h < -1e-12:
                self.logger.warning(f"Negative vertex height h({v}) = {h:.6g}")

        if not lower:
            raise ExactFormNoFlux("No directed edge is strictly lower than its reversal")

        witness = min(lower, key=lambda i: (edge_heights[i], i))
        return {
            'root': tree.root,
            'rst_total': tree.total_weight,
            'vertex_heights': heights,
            'edge_heights': edge_heights,
            'lower_edges': sorted(lower),
            'h_star': edge_heights[witness],
            'witness': witness
        }

    def theorem5_exponent(self, g: WeightedDigraph, strict: bool = True) -> Dict[str, Any]:
        """Flux exponent min CRST(+) - min RST, valid when min CRST(+) < min CRST(-)."""
        rst = self.min_rooted_spanning_tree(g)
        plus = self.min_cycle_rooted_spanning_tree(g, '+')
        try:
            minus_total = self.min_cycle_rooted_spanning_tree(g, '-').total_weight
        except NoSignedCycle:
            minus_total = math.inf

        holds = plus.total_weight < minus_total - self.tie_tol
        report = {
            'exponent': plus.total_weight - rst.total_weight if holds else None,
            'assumption_holds': holds,
            'plus_total': plus.total_weight,
            'minus_total': minus_total,
            'rst_total': rst.total_weight,
            'plus_cycle': list(plus.cycle)
        }
        if not holds and strict:
            raise AssumptionViolated("Positive-cycle minimum does not undercut the negative one",
                                     plus_total=plus.total_weight, minus_total=minus_total)
        return report

    def measure_exponents(self, g: WeightedDigraph) -> Dict[str, float]:
        """min RST rooted at v minus the global minimum, per vertex."""
        overall = self.min_rooted_spanning_tree(g).total_weight
        exponents = {}
        for v in g.vertices:
            try:
                exponents[v] = self.min_rooted_spanning_tree(g, root=v).total_weight - overall
            except NoArborescence:
                exponents[v] = math.inf
        return exponents

    def markov_tree_stationary(self, g: WeightedDigraph) -> Dict[str, float]:
        """Stationary law from weighted in-tree counts (matrix-tree theorem)."""
        n = len(g.vertices)
        if n == 0:
            raise InvalidChain("Chain has no states")
        index = {v: i for i, v in enumerate(g.vertices)}
        P = np.zeros((n, n))
        for e in g.edges:
            if not e.finite or e.weight > 1.0:
                raise InvalidChain(f"Edge {e.id!r} is not a probability", weight=e.weight)
            P[index[e.src], index[e.tgt]] += e.weight

        rows = P.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise InvalidChain("Transition rows must sum to 1", max_deviation=float(np.max(np.abs(rows - 1.0))))

        support = nx.DiGraph()
        support.add_nodes_from(range(n))
        support.add_edges_from(zip(*np.nonzero(P)))
        if not nx.is_strongly_connected(support):
            raise ReducibleChain("Transition graph is not strongly connected")

        A = P.copy()
        np.fill_diagonal(A, 0.0)
        laplacian = np.diag(A.sum(axis=1)) - A
        weights = np.empty(n)
        for i in range(n):
            keep = [j for j in range(n) if j != i]
            weights[i] = np.linalg.det(laplacian[np.ix_(keep, keep)]) if keep else 1.0
        pi = weights / weights.sum()
        return {v: float(pi[index[v]]) for v in g.vertices}


# --- edge-list files -----------------------------------------------------

def read_edge_csv(path: str) -> WeightedDigraph:
    """Edge list with edge_id, src, tgt and weight (or gain); cocycle, tilt_cocycle, reversal_id optional."""
    try:
        with open(path, newline='') as f:
            rows = list(csv.DictReader(f))
    except FileNotFoundError:
        raise InputError(f"Edge file not found: {path}")

    vertices: List[str] = []
    edges: List[GraphEdge] = []
    for line, row in enumerate(rows, start=2):
        try:
            weight_field = row.get('weight') or row.get('gain')
            if weight_field in (None, ''):
                raise InputError(f"Edge file line {line} lacks a weight or gain")
            tilt = row.get('tilt_cocycle')
            edges.append(GraphEdge(
                id=row['edge_id'].strip(),
                src=row['src'].strip(),
                tgt=row['tgt'].strip(),
                weight=float(weight_field),
                cocycle=float(row.get('cocycle') or 0.0),
                reversal_id=(row.get('reversal_id') or '').strip() or None,
                tilt_cocycle=float(tilt) if tilt not in (None, '') else None
            ))
        except (KeyError, ValueError) as e:
            raise InputError(f"Malformed edge file line {line}: {e}")
        vertices.extend([edges[-1].src, edges[-1].tgt])
    return WeightedDigraph(vertices, edges)


def edge_rows(g: WeightedDigraph) -> List[Dict[str, Any]]:
    return [{
        'edge_id': e.id, 'src': e.src, 'tgt': e.tgt, 'weight': e.weight,
        'cocycle': e.cocycle, 'reversal_id': e.reversal_id or '',
        'tilt_cocycle': '' if e.tilt_cocycle is None else e.tilt_cocycle
    } for e in g.edges]


def min_rooted_spanning_tree(g: WeightedDigraph, root: Optional[str] = None) -> TreeResult:
    return TreeOptimizer().min_rooted_spanning_tree(g, root)


def min_cycle_rooted_spanning_tree(g: WeightedDigraph, cocycle_sign: Any = '+') -> CycleTreeResult:
    return TreeOptimizer().min_cycle_rooted_spanning_tree(g, cocycle_sign)


def heights_and_hstar(g: WeightedDigraph) -> Dict[str, Any]:
    return TreeOptimizer().heights_and_hstar(g)


def theorem5_exponent(g: WeightedDigraph, strict: bool = True) -> Dict[str, Any]:
    return TreeOptimizer().theorem5_exponent(g, strict)


def markov_tree_stationary(g: WeightedDigraph) -> Dict[str, float]:
    return TreeOptimizer().markov_tree_stationary(g)
