import math

import numpy as np
import pytest
from scipy.linalg import null_space

from fluxlab.Errors import (AmbiguousMinimum, AssumptionViolated, ConfigurationError, ExactFormNoFlux,
                            InputError, InvalidChain, NoArborescence, NoSignedCycle, ReducibleChain)
from fluxlab.TreeOptimizer import GraphEdge, TreeOptimizer, WeightedDigraph, read_edge_csv


def _graph(edges, vertices=None):
    edges = [GraphEdge(*e) if isinstance(e, tuple) else e for e in edges]
    if vertices is None:
        vertices = [v for e in edges for v in (e.src, e.tgt)]
    return WeightedDigraph(vertices, edges)


@pytest.fixture
def optimizer(logger):
    return TreeOptimizer(logger)


@pytest.fixture
def crst_graph(data_dir):
    return read_edge_csv(str(data_dir / 'crst_counterexample.csv'))


def test_read_edge_csv_keeps_vertex_order_and_reversals(crst_graph):
    assert crst_graph.vertices == ['v2', 'v1']
    assert len(crst_graph.edges) == 8
    assert crst_graph.edge('e1').reversal_id == 'e1r'
    assert crst_graph.edge('e3').is_loop
    assert crst_graph.has_reversals


def test_read_edge_csv_accepts_gain_column(data_dir):
    g = read_edge_csv(str(data_dir / 'measure_counterexample_1d.csv'))
    assert g.edge('e1').weight == 2.0
    assert g.edge('e2r').cocycle == -4.0


def test_read_edge_csv_missing_file(tmp_path):
    with pytest.raises(InputError):
        read_edge_csv(str(tmp_path / 'absent.csv'))


def test_read_edge_csv_rejects_malformed_weight(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('edge_id,src,tgt,weight\na,v1,v2,heavy\n')
    with pytest.raises(InputError):
        read_edge_csv(str(path))


def test_reversal_pairing_must_be_an_involution():
    with pytest.raises(InputError):
        _graph([GraphEdge('a', 'v1', 'v2', 1.0, reversal_id='b'),
                GraphEdge('b', 'v2', 'v1', 1.0, reversal_id='c'),
                GraphEdge('c', 'v2', 'v1', 1.0, reversal_id='b')])


def test_negative_weight_rejected():
    with pytest.raises(InputError):
        _graph([('a', 'v1', 'v2', -1.0)])


def test_rst_on_counterexample(optimizer, crst_graph):
    tree = optimizer.min_rooted_spanning_tree(crst_graph)
    assert tree.total_weight == 6.0
    assert tree.root == 'v1'
    assert tree.tree == frozenset({'e1'})
    assert tree.unique
    assert tree.runner_up_gap == pytest.approx(1.0)


def test_rst_with_fixed_root(optimizer, crst_graph):
    tree = optimizer.min_rooted_spanning_tree(crst_graph, root='v2')
    assert tree.total_weight == 7.0
    assert tree.tree == frozenset({'e2'})
    with pytest.raises(InputError):
        optimizer.min_rooted_spanning_tree(crst_graph, root='v9')


def test_rst_edmonds_agrees_with_exhaustive(optimizer, data_dir):
    for name in ('crst_counterexample.csv', 'plateau_counterexample.csv', 'measure_counterexample_1d.csv'):
        g = read_edge_csv(str(data_dir / name))
        exhaustive = optimizer.min_rooted_spanning_tree(g, method='exhaustive')
        edmonds = optimizer.min_rooted_spanning_tree(g, method='edmonds')
        assert edmonds.total_weight == pytest.approx(exhaustive.total_weight), name
        assert edmonds.root == exhaustive.root, name


def test_rst_unknown_method(optimizer, crst_graph):
    with pytest.raises(ConfigurationError):
        optimizer.min_rooted_spanning_tree(crst_graph, method='greedy')


def test_rst_disconnected_and_empty_graphs(optimizer, data_dir):
    with pytest.raises(NoArborescence):
        optimizer.min_rooted_spanning_tree(read_edge_csv(str(data_dir / 'empty.csv')))
    apart = _graph([('a', 'v1', 'v1', 1.0), ('b', 'v2', 'v2', 1.0)])
    with pytest.raises(NoArborescence):
        optimizer.min_rooted_spanning_tree(apart)


def test_rst_ignores_infinite_edges(optimizer):
    g = _graph([('a', 'v1', 'v2', math.inf), ('b', 'v2', 'v1', 4.0)])
    tree = optimizer.min_rooted_spanning_tree(g)
    assert tree.root == 'v1'
    assert tree.total_weight == 4.0
    with pytest.raises(NoArborescence):
        optimizer.min_rooted_spanning_tree(g, root='v2')


def test_crst_signs_on_counterexample(optimizer, crst_graph):
    plus = optimizer.min_cycle_rooted_spanning_tree(crst_graph, '+')
    assert plus.total_weight == 8.0
    assert plus.tree == frozenset({'e2', 'e3'})
    assert plus.cycle == ('e3',)
    assert plus.runner_up_gap == pytest.approx(3.0)
    minus = optimizer.min_cycle_rooted_spanning_tree(crst_graph, '-')
    assert minus.total_weight == 9.0
    assert minus.tree == frozenset({'e2', 'e3r'})
    assert minus.cycle_cocycle < 0


def test_crst_rejects_unknown_sign(optimizer, crst_graph):
    with pytest.raises(ConfigurationError):
        optimizer.min_cycle_rooted_spanning_tree(crst_graph, '0')


def test_crst_without_signed_cycle(optimizer):
    g = _graph([('a', 'v1', 'v2', 1.0), ('b', 'v2', 'v1', 1.0)])
    with pytest.raises(NoSignedCycle):
        optimizer.min_cycle_rooted_spanning_tree(g, '+')


def test_flux_exponent_on_counterexample(optimizer, crst_graph):
    report = optimizer.theorem5_exponent(crst_graph)
    assert report['assumption_holds']
    assert report['exponent'] == pytest.approx(2.0)
    assert report['rst_total'] == 6.0
    assert report['plus_total'] == 8.0
    assert report['minus_total'] == 9.0


def test_flux_exponent_on_plateau_example(optimizer, data_dir):
    g = read_edge_csv(str(data_dir / 'plateau_counterexample.csv'))
    rst = optimizer.min_rooted_spanning_tree(g)
    assert rst.total_weight == 1005.0
    assert rst.root == 'v2'
    report = optimizer.theorem5_exponent(g)
    assert report['plus_total'] == 1002004.0
    assert report['minus_total'] == 1002104.0
    assert report['exponent'] == pytest.approx(1000999.0)


def test_flux_exponent_when_signs_tie(optimizer):
    # both orientations of the only cycle weigh the same
    g = _graph([('a', 'v1', 'v1', 1.0, 1.0), ('b', 'v1', 'v1', 1.0, -1.0)])
    with pytest.raises(AssumptionViolated):
        optimizer.theorem5_exponent(g)
    report = optimizer.theorem5_exponent(g, strict=False)
    assert not report['assumption_holds']
    assert report['exponent'] is None


def test_heights_and_hstar_on_counterexample(optimizer, crst_graph):
    report = optimizer.heights_and_hstar(crst_graph)
    assert report['root'] == 'v1'
    assert report['vertex_heights'] == {'v1': 0.0, 'v2': 5.0}
    assert report['edge_heights']['e2'] == 7.0
    assert report['edge_heights']['e3'] == 6.0
    assert report['edge_heights']['e4'] == 5.0
    assert report['lower_edges'] == ['e2', 'e3', 'e4']
    assert report['h_star'] == 5.0
    assert report['witness'] == 'e4'


def test_hstar_matches_flux_exponent_on_1d_example(optimizer, data_dir):
    g = read_edge_csv(str(data_dir / 'measure_counterexample_1d.csv'))
    report = optimizer.heights_and_hstar(g)
    assert report['vertex_heights']['v2'] == 8.0
    assert report['h_star'] == 5.0
    assert report['witness'] == 'e2'
    assert optimizer.theorem5_exponent(g)['exponent'] == pytest.approx(5.0)


def test_measure_exponents_differ_from_heights(optimizer, data_dir):
    g = read_edge_csv(str(data_dir / 'measure_counterexample_1d.csv'))
    exponents = optimizer.measure_exponents(g)
    assert exponents == {'v2': 3.0, 'v1': 0.0}
    assert optimizer.vertex_heights(g)['v2'] == 8.0


def test_measure_exponents_on_counterexample(optimizer, crst_graph):
    assert optimizer.measure_exponents(crst_graph) == {'v2': 1.0, 'v1': 0.0}


def test_tied_rst_is_ambiguous(optimizer, data_dir):
    g = read_edge_csv(str(data_dir / 'two_vertex_tie.csv'))
    assert not optimizer.min_rooted_spanning_tree(g).unique
    with pytest.raises(AmbiguousMinimum):
        optimizer.heights_and_hstar(g)


def test_exact_cocycle_has_no_lower_edge(optimizer):
    # weights of a gradient field: cocycle(e) = w(ebar) - w(e)
    g = _graph([GraphEdge('a', 'v1', 'v2', 3.0, -1.0, 'b'), GraphEdge('b', 'v2', 'v1', 2.0, 1.0, 'a')])
    assert optimizer.vertex_heights(g) == {'v1': 0.0, 'v2': 1.0}
    with pytest.raises(ExactFormNoFlux):
        optimizer.heights_and_hstar(g)


def test_tilt_cocycle_breaks_height_ties(optimizer):
    g = _graph([GraphEdge('loop', 'v1', 'v1', 1.0, 0.0, 'loop_bar', 0.5),
                GraphEdge('loop_bar', 'v1', 'v1', 1.0, 0.0, 'loop', -0.5)])
    report = optimizer.heights_and_hstar(g)
    assert report['lower_edges'] == ['loop']
    assert report['witness'] == 'loop'
    assert report['h_star'] == 1.0


def test_markov_tree_stationary(optimizer, data_dir):
    pi = optimizer.markov_tree_stationary(read_edge_csv(str(data_dir / 'three_state_chain.csv')))
    assert pi['a'] == pytest.approx(8 / 15)
    assert pi['b'] == pytest.approx(4 / 15)
    assert pi['c'] == pytest.approx(3 / 15)


def _random_chain(rng, n):
    support = rng.random((n, n)) < 0.5
    for i in range(n):
        support[i, (i + 1) % n] = True
    P = np.where(support, rng.uniform(0.05, 1.0, (n, n)), 0.0)
    return P / P.sum(axis=1, keepdims=True)


def test_markov_tree_stationary_matches_left_kernel(optimizer):
    rng = np.random.default_rng(4)
    states = ['s0', 's1', 's2', 's3']
    for _ in range(100):
        P = _random_chain(rng, 4)
        edges = [(f'e{i}{j}', states[i], states[j], float(P[i, j]))
                 for i in range(4) for j in range(4) if P[i, j] > 0]
        pi = optimizer.markov_tree_stationary(_graph(edges, states))
        kernel = null_space(P.T - np.eye(4))[:, 0]
        kernel /= kernel.sum()
        assert np.allclose([pi[s] for s in states], kernel, rtol=0.0, atol=1e-12)


def test_markov_tree_stationary_rejects_bad_chains(optimizer):
    leaky = _graph([('a', 'x', 'y', 0.5), ('b', 'y', 'x', 1.0)])
    with pytest.raises(InvalidChain):
        optimizer.markov_tree_stationary(leaky)
    absorbing = _graph([('a', 'x', 'y', 1.0), ('b', 'y', 'y', 1.0)])
    with pytest.raises(ReducibleChain):
        optimizer.markov_tree_stationary(absorbing)
