import numpy as np
import pytest

from fluxlab.CriticalPointManager import CriticalPointManager, classify, find_critical_points
from fluxlab.DomainFields import TiltedDrift
from fluxlab.Errors import DegenerateZero, IncompleteSweep, InputError, NotAZero

SQRT15 = np.sqrt(15.0)


def _by_value(points):
    return {round(cp.tilted_value, 6): cp for cp in points}


def test_nr2006_has_four_hyperbolic_zeros(nr2006, logger):
    finder = CriticalPointManager(nr2006, logger)
    points = finder.find_critical_points(64)
    assert len(points) == 4
    assert finder.report['index_counts'] == [1, 2, 1]
    assert finder.report['transversality'] == 'unverified'
    assert finder.report['distinct_saddle_values']

    found = _by_value(points)
    assert sorted(found) == [0.0, 2.0, 4.0, 6.0]
    assert found[0.0].index == 0
    assert found[2.0].index == 1
    assert found[4.0].index == 1
    assert found[6.0].index == 2
    assert np.allclose(found[0.0].position, [np.pi / 2 + SQRT15, np.pi / 2], atol=1e-9)
    assert np.allclose(found[2.0].position, [3 * np.pi / 2 - SQRT15, 3 * np.pi / 2], atol=1e-9)
    assert all(cp.newton_residual < 1e-10 for cp in points)


def test_nr2006_saddle_spectrum(nr2006):
    s1 = [cp for cp in find_critical_points(nr2006, 64) if abs(cp.tilted_value - 2.0) < 1e-6][0]
    assert s1.hessian_eigs[0] == pytest.approx(-0.217, abs=0.01)
    assert s1.hessian_eigs[1] == pytest.approx(9.217, abs=0.01)


def test_positions_stay_in_fundamental_domain(nr2006):
    for cp in find_critical_points(nr2006.with_tilt(0.1), 64):
        assert np.all(cp.position >= 0.0)
        assert np.all(cp.position < 2 * np.pi)


def test_seed_mesh_size_does_not_change_result(nr2006):
    coarse = sorted(round(cp.tilted_value, 8) for cp in find_critical_points(nr2006, 48))
    fine = sorted(round(cp.tilted_value, 8) for cp in find_critical_points(nr2006, 128))
    assert coarse == fine


def test_seed_mesh_too_coarse(nr2006):
    with pytest.raises(InputError):
        find_critical_points(nr2006, 16)


def test_cos1d_has_one_well_and_one_barrier(cos1d):
    points = find_critical_points(cos1d, 64)
    assert [cp.index for cp in sorted(points, key=lambda cp: cp.tilted_value)] == [0, 1]
    well = [cp for cp in points if cp.is_minimum][0]
    assert well.position[0] == pytest.approx(np.pi, abs=1e-10)
    assert well.tilted_value == pytest.approx(-1.0, abs=1e-12)


def test_classify_rejects_non_zeros(nr2006):
    with pytest.raises(NotAZero):
        classify(nr2006, [1.0, 1.0])
    index, eigs = classify(nr2006, [np.pi / 2 + SQRT15, np.pi / 2])
    assert index == 0
    assert np.all(eigs > 0)


def test_flat_potential_is_degenerate():
    with pytest.raises(DegenerateZero):
        find_critical_points(TiltedDrift.preset('zero', periods=[2 * np.pi]), 32)


def test_pure_tilt_has_no_zeros():
    with pytest.raises(IncompleteSweep):
        find_critical_points(TiltedDrift.preset('zero', c=0.5, periods=[2 * np.pi]), 32)


def test_track_vertex_follows_the_well(nr2006):
    finder = CriticalPointManager(nr2006)
    well = [cp for cp in finder.find_critical_points(64) if cp.is_minimum][0]
    moved = CriticalPointManager(nr2006.with_tilt(0.05)).find_critical_points(64)
    tracked = finder.track_vertex(well, moved)
    assert tracked.is_minimum
    assert float(nr2006.torus.distance(tracked.position, well.position)) < 0.5


def test_track_vertex_without_minima(nr2006):
    saddles = [cp for cp in find_critical_points(nr2006, 64) if cp.is_saddle]
    with pytest.raises(IncompleteSweep):
        CriticalPointManager(nr2006).track_vertex(saddles[0], saddles)


def test_as_row_pads_one_dimensional_points(cos1d):
    row = find_critical_points(cos1d, 64)[0].as_row()
    assert np.isnan(row['y'])
    assert np.isnan(row['eig2'])
    assert set(row) == {'x', 'y', 'index', 'tilted_value', 'eig1', 'eig2', 'residual'}
