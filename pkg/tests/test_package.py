import fluxlab
from fluxlab import FokkerPlanckSolver, TreeOptimizer


def test_operations_are_lifted_to_the_package():
    assert fluxlab.min_rooted_spanning_tree is TreeOptimizer.min_rooted_spanning_tree
    assert fluxlab.flux_1d_closed_form is FokkerPlanckSolver.flux_1d_closed_form
    for name in ('find_critical_points', 'build_morse_graph', 'hstar_via_merge_tree',
                 'minimize_action', 'estimate_flux', 'FluxLabError', 'ConfigurationManager'):
        assert name in fluxlab.__all__


def test_imported_helpers_are_not_re_exported():
    assert 'np' not in fluxlab.__all__
    assert 'Dict' not in fluxlab.__all__
    assert '_version_tuple' not in fluxlab.__all__
    assert fluxlab.__all__ == sorted(fluxlab.__all__)
