import dataclasses
import json

import numpy as np
import pytest

from fluxlab.DomainFields import ClosedOneForm, TiltedDrift, TrigPotential
from fluxlab.Errors import GridMismatch, GridTooCoarse, InputError, NotConverged
from fluxlab.FokkerPlanckSolver import (FokkerPlanckSolver, bernoulli, density_1d_closed_form,
                                        face_weight, flux_1d_closed_form)
from fluxlab.SolveCache import SolveCache


@pytest.fixture
def solver(logger):
    return FokkerPlanckSolver(logger)


def _dx(drift):
    return ClosedOneForm.from_name(drift.torus, 'dx')


def test_bernoulli_function():
    assert bernoulli(0.0) == pytest.approx(1.0)
    x = np.array([-30.0, -2.0, -1e-7, 1e-7, 0.5, 40.0])
    # B(x) - B(-x) = -x
    assert np.allclose(bernoulli(x) - bernoulli(-x), -x, atol=1e-12)
    assert bernoulli(1e-6 * (1 - 1e-9)) == pytest.approx(bernoulli(1e-6 * (1 + 1e-9)), rel=1e-9)
    assert bernoulli(800.0) == pytest.approx(0.0, abs=1e-300)


def test_grid_and_noise_guards(solver, cos1d):
    drift = cos1d.with_tilt(0.5)
    with pytest.raises(InputError):
        solver.solve_stationary(drift, 0.5, 16)
    with pytest.raises(InputError):
        solver.solve_stationary(drift, 0.0, 64)
    assert solver.admissible_eps(drift, 32) == pytest.approx(0.5 * 1.5 * 2 * np.pi / 32, rel=1e-3)
    with pytest.raises(GridTooCoarse):
        solver.solve_stationary(drift, 0.05, 32)


def test_density_is_normalised_and_positive(solver, cos1d):
    field = solver.solve_stationary(cos1d.with_tilt(0.5), 0.5, 128)
    assert field.rho.sum() * field.cell_volume == pytest.approx(1.0, abs=1e-12)
    assert np.all(field.rho > 0)
    assert field.residual < 1e-8


def test_zero_tilt_gives_discrete_gibbs_density(solver, cos1d):
    eps = 0.3
    field = solver.solve_stationary(cos1d, eps, 128)
    gibbs = np.exp(-np.cos(field.nodes[:, 0]) / eps)
    gibbs /= gibbs.sum() * field.cell_volume
    assert np.allclose(field.rho, gibbs, rtol=1e-8)
    assert abs(solver.flux(field, _dx(cos1d)).value) < 1e-10


def test_1d_flux_matches_closed_form(solver, cos1d):
    c, eps = 0.5, 0.5
    drift = cos1d.with_tilt(c)
    exact = flux_1d_closed_form(cos1d.potential, c, eps)
    single = solver.flux(solver.solve_stationary(drift, eps, 256), _dx(drift))
    assert single.value == pytest.approx(exact, rel=1e-2)
    extrapolated = solver.richardson_flux(drift, eps, _dx(drift), 128)
    assert extrapolated.value == pytest.approx(exact, rel=1e-3)
    assert extrapolated.uncertainty > 0
    assert extrapolated.details['extrapolated']


def test_1d_density_matches_closed_form(solver, cos1d):
    c, eps = 0.5, 0.5
    field = solver.solve_stationary(cos1d.with_tilt(c), eps, 256)
    idx = [0, 64, 128, 192]
    expected = density_1d_closed_form(cos1d.potential, c, eps, field.nodes[idx, 0])
    assert np.allclose(field.rho[idx], expected, rtol=1e-2)


def test_closed_form_log_and_guards(cos1d, nr2006):
    value = flux_1d_closed_form(cos1d.potential, 0.4, 0.3)
    assert flux_1d_closed_form(cos1d.potential, 0.4, 0.3, log=True) == pytest.approx(-0.3 * np.log(value))
    with pytest.raises(InputError):
        flux_1d_closed_form(cos1d.potential, 0.0, 0.3)
    with pytest.raises(InputError):
        flux_1d_closed_form(nr2006.potential, 0.4, 0.3)


def test_separable_2d_flux_reduces_to_1d(solver, cos1d):
    c, eps = 0.3, 0.5
    flat = solver.flux(solver.solve_stationary(cos1d.with_tilt(c), eps, 64), _dx(cos1d))
    drift = TiltedDrift.preset('cos2d', c=c, direction=[1.0, 0.0])
    field = solver.solve_stationary(drift, eps, 64)
    along = solver.flux(field, ClosedOneForm.from_name(drift.torus, 'dx'))
    across = solver.flux(field, ClosedOneForm.from_name(drift.torus, 'dy'))
    assert along.value == pytest.approx(flat.value, rel=1e-6)
    assert along.details["hypersurface"] == pytest.approx(along.value, rel=1e-7)
    assert abs(across.value) < 1e-8 * along.value


def test_exact_form_carries_no_flux(solver, nr2006):
    drift = nr2006.with_tilt(0.5)
    field = solver.solve_stationary(drift, 0.7, 64)
    exact = ClosedOneForm(drift.torus, [0.0, 0.0], nr2006.potential)
    assert abs(solver.flux(field, exact).value) < 1e-6


def test_flux_is_linear_in_the_form(solver, nr2006):
    drift = nr2006.with_tilt(0.5)
    field = solver.solve_stationary(drift, 0.7, 64)
    dx = ClosedOneForm.from_name(drift.torus, 'dx')
    dy = ClosedOneForm.from_name(drift.torus, 'dy')
    mixed = ClosedOneForm(drift.torus, [2.0, -1.0])
    expected = 2.0 * solver.flux(field, dx).value - solver.flux(field, dy).value
    assert solver.flux(field, mixed).value == pytest.approx(expected, rel=1e-9, abs=1e-14)


def test_form_on_another_torus(solver, cos1d, nr2006):
    field = solver.solve_stationary(cos1d.with_tilt(0.5), 0.5, 64)
    with pytest.raises(GridMismatch):
        solver.flux(field, ClosedOneForm.from_name(nr2006.torus, 'dx'))


def test_entropy_production_balance(solver, nr2006):
    drift = nr2006.with_tilt(0.5)
    coarse = solver.entropy_production_check(solver.solve_stationary(drift, 0.7, 64), drift)
    fine = solver.entropy_production_check(solver.solve_stationary(drift, 0.7, 128), drift)
    assert coarse['lhs'] > 0 and coarse['rhs'] > 0
    # second-order consistency error of the fitted face density
    assert fine['residual'] < 0.5 * coarse['residual']
    assert fine['residual'] < 0.1
    with pytest.raises(InputError):
        solver.entropy_production_check(solver.solve_stationary(drift, 0.7, 64), nr2006.with_tilt(0.4))


def test_entropy_production_on_single_well(solver, cos1d):
    drift = cos1d.with_tilt(0.5)
    check = solver.entropy_production_check(solver.solve_stationary(drift, 0.5, 256), drift)
    assert check['lhs'] > 0
    assert check['residual'] < 1e-3


def test_entropy_production_vanishes_without_tilt(solver, nr2006):
    check = solver.entropy_production_check(solver.solve_stationary(nr2006, 0.7, 64), nr2006)
    assert abs(check['lhs']) < 1e-10
    assert abs(check['rhs']) < 1e-10


def test_entropy_production_rejects_inconsistent_current(solver, nr2006):
    drift = nr2006.with_tilt(0.5)
    field = solver.solve_stationary(drift, 0.7, 64)
    current = field.current.copy()
    current[0] += 0.5 * field.max_current
    corrupted = dataclasses.replace(field, current=current)
    assert solver.entropy_production_check(corrupted, drift)['residual'] > 0.5
    assert solver.entropy_production_check(field, drift)['residual'] < 0.5


def test_face_weight_limits():
    assert face_weight(0.0) == pytest.approx(0.5)
    x = np.array([-3.0, -1e-5, 1e-5, 3.0])
    # theta(x) + theta(-x) = 1
    assert np.allclose(face_weight(x) + face_weight(-x), 1.0, atol=1e-12)
    assert face_weight(1e-4 * (1 - 1e-9)) == pytest.approx(face_weight(1e-4 * (1 + 1e-9)), rel=1e-8)
    assert 0.0 < face_weight(40.0) < 0.05


def test_refinement_tolerance_is_enforced(nr2006):
    strict = FokkerPlanckSolver(settings={'residual_tol': 1e-30}, use_cache=False)
    with pytest.raises(NotConverged) as info:
        strict.solve_stationary(nr2006.with_tilt(0.5), 0.7, 64)
    assert info.value.context['residual'] > 0


@pytest.mark.slow
class TestTiltedTorusAtFineGrid:
    """nr2006 at c = 0.2, eps = 0.3 on 256 x 256, well above the admissible noise."""

    C, EPS, GRID = 0.2, 0.3, 256

    @pytest.fixture
    def field(self, solver, nr2006):
        return solver.solve_stationary(nr2006.with_tilt(self.C), self.EPS, self.GRID)

    def test_flux_is_positive_and_consistent(self, solver, field):
        estimate = solver.flux(field, _dx(field.drift))
        assert estimate.value > 0
        assert estimate.details['volume'] == pytest.approx(estimate.value, rel=1e-6)
        assert field.residual < 1e-10

    def test_flux_ignores_exact_part(self, solver, field):
        bump = TrigPotential(field.torus, [[1, 2, 0.8, 0.3], [2, -1, 0.5, 1.1]])
        plain = solver.flux(field, _dx(field.drift))
        shifted = solver.flux(field, ClosedOneForm(field.torus, [1.0, 0.0], bump))
        assert abs(shifted.value - plain.value) < 1e-8
        assert shifted.value == pytest.approx(plain.value, rel=1e-6)

    def test_untilted_current_vanishes(self, solver, nr2006):
        field = solver.solve_stationary(nr2006, self.EPS, self.GRID)
        assert field.max_current < 1e-8
        assert abs(solver.flux(field, _dx(nr2006)).value) < 1e-10


def test_solves_are_cached(solver, cos1d):
    drift = cos1d.with_tilt(0.5)
    assert not solver.is_cached(drift, 0.5, 64)
    first = solver.solve_stationary(drift, 0.5, 64)
    assert solver.is_cached(cos1d.with_tilt(0.5), 0.5, 64)
    second = solver.solve_stationary(cos1d.with_tilt(0.5), 0.5, 64)
    assert first is second
    assert SolveCache().hits >= 1
    uncached = FokkerPlanckSolver(use_cache=False).solve_stationary(drift, 0.5, 64)
    assert uncached is not first
    assert np.allclose(uncached.rho, first.rho)


def test_ball_mass(solver, cos1d):
    field = solver.solve_stationary(cos1d, 0.2, 128)
    assert solver.ball_mass(field, [np.pi], 10.0) == pytest.approx(1.0, abs=1e-12)
    assert solver.ball_mass(field, [np.pi], 1.0) > 0.9
    assert solver.ball_mass(field, [0.0], 0.5) < 1e-3


def test_dump_writes_binaries_and_sidecar(solver, nr2006, tmp_path):
    field = solver.solve_stationary(nr2006.with_tilt(0.5), 0.7, 64)
    paths = solver.dump(field, tmp_path / 'fields' / 'run')
    rho = np.fromfile(paths['rho'], dtype='<f8').reshape(64, 64)
    current = np.fromfile(paths['current'], dtype='<f8').reshape(2, 64, 64)
    assert np.allclose(rho, field.rho)
    assert np.allclose(current, field.current)
    sidecar = json.loads(open(paths['sidecar']).read())
    assert sidecar['current']['shape'] == [2, 64, 64]
    assert sidecar['dtype'] == '<f8'
