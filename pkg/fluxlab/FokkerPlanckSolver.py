# fluxlab/FokkerPlanckSolver.py

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu

from .ConfigurationManager import DEFAULT_CONFIG
from .DomainFields import ClosedOneForm, PeriodicPotential, TiltedDrift, Torus
from .Errors import (GridMismatch, GridTooCoarse, InputError, NegativeDensity, NotConverged,
                     QuadratureFailure)
from .SolveCache import SolveCache

AGREEMENT_TOLERANCE = 1e-8
UNIT_ROUNDOFF = float(np.finfo(float).eps)
# rounding slack on sums of face currents
ROUNDING_SLACK = 64.0
REFINEMENT_FLOOR = 8.0 * UNIT_ROUNDOFF


def bernoulli(x: np.ndarray) -> np.ndarray:
    """B(x) = x / (e^x - 1), with its Taylor expansion near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, x)
    with np.errstate(over='ignore'):
        exact = safe / np.expm1(safe)
    return np.where(small, 1.0 - x / 2.0 + x * x / 12.0, exact)


def face_weight(x: np.ndarray) -> np.ndarray:
    """
    theta(x) = (1 - B(x)) / x, the weight of the lower-index node in the face density
    theta rho_i + (1 - theta) rho_{i+1} that turns the exponentially fitted current
    into v rho_face - eps D rho.
    """
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 0.5 - x / 12.0, (1.0 - bernoulli(safe)) / safe)


@dataclass
class StationaryField:
    """Node densities and face currents of the stationary Fokker-Planck problem."""
    drift: TiltedDrift
    eps: float
    grid_n: tuple
    spacing: np.ndarray
    rho: np.ndarray
    current: np.ndarray
    tilted_steps: np.ndarray
    residual: float
    iterations: int
    # |upstream term| + |downstream term| of every face current
    face_scale: np.ndarray = None
    # cell volume times the sum over cells of |A| rho, the magnitude behind div J
    divergence_scale: float = 0.0

    @property
    def torus(self) -> Torus:
        return self.drift.torus

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def nodes(self) -> np.ndarray:
        axes = [np.arange(n) * h for n, h in zip(self.grid_n, self.spacing)]
        return np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)

    @property
    def divergence(self) -> np.ndarray:
        div = np.zeros_like(self.rho)
        for k in range(self.torus.dim):
            div += (self.current[k] - np.roll(self.current[k], 1, axis=k)) / self.spacing[k]
        return div

    @property
    def max_current(self) -> float:
        return float(np.max(np.abs(self.current)))


@dataclass
class FluxEstimate:
    value: float
    eps: float
    method: str
    uncertainty: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def minus_eps_log(self) -> float:
        return float(-self.eps * np.log(self.value)) if self.value > 0 else float('nan')

    def describe(self) -> Dict[str, Any]:
        return {'value': self.value, 'eps': self.eps, 'method': self.method,
                'uncertainty': self.uncertainty, **self.details}


class FokkerPlanckSolver:
    """
    Conservative finite volumes with exponentially fitted face currents on a
    periodic lattice. The discrete generator is a singular M-matrix; its kernel
    is found from the system with the redundant conservation row at the deepest
    node replaced by a pin; one sparse LU factor serves the first solve and
    every iterative refinement sweep after it.

    Convergence is judged per cell: |div J| against the sum of the magnitudes
    of the face currents meeting in that cell.
    """

    def __init__(self, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None, use_cache: bool = True):
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['fokker_planck'], **(settings or {})}
        self.cache = SolveCache() if use_cache else None

    def _grid(self, torus: Torus, grid_n: Union[int, Sequence[int]]) -> tuple:
        grid = tuple(int(n) for n in np.broadcast_to(np.asarray(grid_n, dtype=int), (torus.dim,)))
        if min(grid) < 32:
            raise InputError("Fokker-Planck grid needs at least 32 nodes per axis", grid=list(grid))
        return grid

    def admissible_eps(self, drift: TiltedDrift, grid_n: Union[int, Sequence[int]]) -> float:
        """Smallest noise intensity the grid resolves: max|v| h / 2."""
        grid = self._grid(drift.torus, grid_n)
        spacing = drift.torus.L / np.asarray(grid)
        return 0.5 * drift.max_speed(max(grid)) * float(np.max(spacing))

    def is_cached(self, drift: TiltedDrift, eps: float,
                  grid_n: Union[int, Sequence[int]] = None) -> bool:
        grid = self._grid(drift.torus, grid_n or self.settings['grid_n'])
        return self.cache is not None and SolveCache.make_key(drift.key(), eps, grid) in self.cache

    def solve_stationary(self, drift: TiltedDrift, eps: float,
                         grid_n: Union[int, Sequence[int]] = None) -> StationaryField:
        grid = self._grid(drift.torus, grid_n or self.settings['grid_n'])
        if eps <= 0:
            raise InputError("Noise intensity must be positive", eps=eps)
        limit = self.admissible_eps(drift, grid)
        if eps < limit:
            raise GridTooCoarse("Noise intensity below grid resolution", eps=eps,
                                smallest=limit, grid=list(grid))

        key = SolveCache.make_key(drift.key(), eps, grid)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                self.logger.debug(f"Solve cache hit for eps={eps}, grid={list(grid)}")
                return cached

        result = self._solve(drift, eps, grid)
        if self.cache is not None:
            self.cache.set(key, result)
        return result

    def _solve(self, drift: TiltedDrift, eps: float, grid: tuple) -> StationaryField:
        torus = drift.torus
        dim = torus.dim
        spacing = torus.L / np.asarray(grid)
        axes = [np.arange(n) * h for n, h in zip(grid, spacing)]
        nodes = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
        U = drift.potential.value(nodes)
        size = U.size
        index = np.arange(size).reshape(grid)

        steps = np.stack([np.roll(U, -1, axis=k) - U - drift.tilt[k] * spacing[k] for k in range(dim)])
        rows, cols, data = [], [], []
        coefficients = []
        for k in range(dim):
            delta = steps[k] / eps
            scale = eps / spacing[k] ** 2
            forward = scale * bernoulli(delta).ravel()
            backward = scale * bernoulli(-delta).ravel()
            coefficients.append((bernoulli(delta), bernoulli(-delta)))
            here = index.ravel()
            there = np.roll(index, -1, axis=k).ravel()
            rows += [here, here, there, there]
            cols += [here, there, here, there]
            data += [forward, -backward, -forward, backward]

        # Slotboom scaling: unknown g with rho = w g keeps the LU well scaled
        w = np.exp(-(U - U.min()) / eps).ravel()
        rows, cols, data = np.concatenate(rows), np.concatenate(cols), np.concatenate(data)
        A = coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()
        magnitude = abs(A)

        # columns of A sum to zero, so the row at the pin is implied by the others
        pin = int(np.argmax(w))
        keep = rows != pin
        M = coo_matrix((np.append(data[keep] * w[cols[keep]], 1.0),
                        (np.append(rows[keep], pin), np.append(cols[keep], pin))),
                       shape=(size, size)).tocsc()
        lu = splu(M)
        pinned = np.zeros(size)
        pinned[pin] = 1.0

        def backward_error(g: np.ndarray) -> float:
            rho = w * g
            scale = magnitude @ np.abs(rho)
            live = scale > 0
            return float(np.max(np.abs(A @ rho)[live] / scale[live]))

        g = lu.solve(pinned)
        residual = backward_error(g)
        iterations = 1
        while residual > REFINEMENT_FLOOR and iterations < int(self.settings['max_iterations']):
            candidate = g + lu.solve(pinned - M @ g)
            candidate_residual = backward_error(candidate)
            iterations += 1
            if candidate_residual < residual:
                halved = 2.0 * candidate_residual <= residual
                g, residual = candidate, candidate_residual
                if halved:
                    continue
            break
        if not residual <= self.settings['residual_tol']:
            raise NotConverged("Refinement did not bring div J under the residual tolerance",
                               residual=residual, iterations=iterations)
        if np.any(g <= 0):
            raise NegativeDensity("Kernel vector changes sign", min_value=float(g.min()))

        rho = w * g
        rho /= rho.sum() * float(np.prod(spacing))
        rho_grid = rho.reshape(grid)

        current, face_scale = [], []
        for k in range(dim):
            upstream = (eps / spacing[k]) * coefficients[k][0] * rho_grid
            downstream = (eps / spacing[k]) * coefficients[k][1] * np.roll(rho_grid, -1, axis=k)
            current.append(upstream - downstream)
            face_scale.append(upstream + downstream)
        current = np.stack(current)

        self.logger.info(f"Stationary solve eps={eps}, grid={list(grid)}: {iterations} sweeps, "
                         f"div residual {residual:.2e}, max|J| {np.max(np.abs(current)):.3e}")
        return StationaryField(drift=drift, eps=float(eps), grid_n=grid, spacing=spacing,
                               rho=rho_grid, current=current, tilted_steps=steps,
                               residual=residual, iterations=iterations,
                               face_scale=np.stack(face_scale),
                               divergence_scale=float(np.sum(magnitude @ rho) * np.prod(spacing)))

    # --- fluxes ------------------------------------------------------------------

    def _face_form(self, field: StationaryField, form: ClosedOneForm) -> np.ndarray:
        """alpha on every face, with its exact part taken as a difference quotient."""
        if form.torus != field.torus:
            raise GridMismatch("One-form and field live on different tori",
                               form=form.torus.periods, field=field.torus.periods)
        values = np.stack([np.full(field.grid_n, form.harmonic[k]) for k in range(field.torus.dim)])
        if form.primitive is not None:
            P = form.primitive.value(field.nodes)
            for k in range(field.torus.dim):
                values[k] -= (np.roll(P, -1, axis=k) - P) / field.spacing[k]
        return values

    def _hyperplane_currents(self, field: StationaryField, k: int):
        """Current through every lattice hyperplane normal to axis k, and the rounding scale of each sum."""
        other = tuple(a for a in range(field.torus.dim) if a != k)
        area = float(np.prod([field.spacing[a] for a in other]))
        scale = field.face_scale[k] if field.face_scale is not None else np.abs(field.current[k])
        if other:
            return field.current[k].sum(axis=other) * area, scale.sum(axis=other) * area
        return field.current[k] * area, scale * area

    def hypersurface_flux(self, field: StationaryField, form: ClosedOneForm) -> FluxEstimate:
        """
        Harmonic part of alpha paired with the current through the hyperplanes normal
        to each axis. Every hyperplane carries the same total when div J = 0; they are
        averaged with weights 1/s^2, s the rounding scale of the hyperplane's face sum,
        so planes through a well, where the fitted face terms cancel, count least.
        """
        if form.torus != field.torus:
            raise GridMismatch("One-form and field live on different tori")
        value, spread, floor = 0.0, 0.0, 0.0
        divergence_bound = max(field.residual, UNIT_ROUNDOFF) * field.divergence_scale
        for k in range(field.torus.dim):
            through, scale = self._hyperplane_currents(field, k)
            smallest = max(float(scale.min()), np.finfo(float).tiny)
            weights = (smallest / np.maximum(scale, smallest)) ** 2
            estimate = float(np.sum(weights * through) / np.sum(weights))
            value += form.harmonic[k] * field.torus.L[k] * estimate
            spread = max(spread, float(np.ptp(through)))
            floor += abs(form.harmonic[k]) * field.torus.L[k] * (
                ROUNDING_SLACK * UNIT_ROUNDOFF * float(scale.max()) + divergence_bound)
        return FluxEstimate(value=float(value), eps=field.eps, method='fp-hypersurface',
                            details={'column_spread': spread, 'rounding_floor': floor})

    def flux(self, field: StationaryField, form: ClosedOneForm) -> FluxEstimate:
        """
        Sum over faces of alpha(J) times the cell volume. The harmonic part is taken
        from the hyperplane currents and the exact part from the face sum; the literal
        face sum of the whole form must agree with it to AGREEMENT_TOLERANCE relative,
        or within the rounding floor of the hyperplane sums when that is larger.
        """
        alpha = self._face_form(field, form)
        harmonic = np.asarray(form.harmonic, dtype=float).reshape((-1,) + (1,) * field.torus.dim)
        volume = float(np.sum(alpha * field.current) * field.cell_volume)
        exact = float(np.sum((alpha - harmonic) * field.current) * field.cell_volume)
        surface = self.hypersurface_flux(field, form)
        value = surface.value + exact

        allowed = AGREEMENT_TOLERANCE * abs(value) + surface.details['rounding_floor']
        if not abs(volume - value) <= allowed:
            raise NotConverged("Volume and hypersurface fluxes disagree", volume=volume,
                               hypersurface=value, allowed=allowed)
        return FluxEstimate(value=value, eps=field.eps, method='fp-volume',
                            details={'volume': volume, 'hypersurface': surface.value,
                                     'column_spread': surface.details['column_spread'],
                                     'div_residual': field.residual,
                                     'grid': list(field.grid_n)})

    def face_density(self, field: StationaryField) -> np.ndarray:
        """theta rho_i + (1 - theta) rho_{i+1} per face, theta = face_weight(delta)."""
        theta = face_weight(field.tilted_steps / field.eps)
        return np.stack([theta[k] * field.rho + (1.0 - theta[k]) * np.roll(field.rho, -1, axis=k)
                         for k in range(field.torus.dim)])

    def entropy_production_check(self, field: StationaryField,
                                 drift: Optional[TiltedDrift] = None) -> Dict[str, float]:
        """
        int alpha(J) for alpha = drift-flat against int |J|^2 / rho. The face density
        comes from the two neighbouring node densities alone, never from J. On a solved
        field the residual is the consistency error of the scheme, about delta^2 / 12
        with delta = |v| h / eps.
        """
        drift = drift or field.drift
        if drift.key() != field.drift.key():
            raise InputError("Entropy production needs the field's own drift")
        alpha = -field.tilted_steps / field.spacing.reshape((-1,) + (1,) * field.torus.dim)

        lhs = float(np.sum(alpha * field.current) * field.cell_volume)
        rhs = float(np.sum(field.current ** 2 / self.face_density(field)) * field.cell_volume)
        denominator = max(abs(lhs), abs(rhs))
        residual = abs(lhs - rhs) / denominator if denominator > 0 else 0.0
        return {'lhs': lhs, 'rhs': rhs, 'residual': residual}

    def richardson_flux(self, drift: TiltedDrift, eps: float, form: ClosedOneForm,
                        grid_n: Union[int, Sequence[int]]) -> FluxEstimate:
        """Second-order extrapolation from grids n and 2n; uncertainty is the n/2n gap."""
        grid = np.asarray(self._grid(drift.torus, grid_n))
        coarse = self.flux(self.solve_stationary(drift, eps, grid), form)
        fine = self.flux(self.solve_stationary(drift, eps, 2 * grid), form)
        value = (4.0 * fine.value - coarse.value) / 3.0
        return FluxEstimate(value=value, eps=eps, method='fp-volume',
                            uncertainty=abs(fine.value - coarse.value),
                            details={'coarse': coarse.value, 'fine': fine.value,
                                     'grid': (2 * grid).tolist(), 'extrapolated': True})

    def ball_mass(self, field: StationaryField, center: Sequence[float], r: float) -> float:
        distances = field.torus.distance(field.nodes, np.asarray(center, dtype=float))
        return float(field.rho[distances < r].sum() * field.cell_volume)

    def dump(self, field: StationaryField, path: Union[str, Path]) -> Dict[str, str]:
        """rho and J as flat little-endian float64 files plus a JSON sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rho_path = path.with_suffix('.rho.f8')
        current_path = path.with_suffix('.current.f8')
        field.rho.astype('<f8').tofile(rho_path)
        field.current.astype('<f8').tofile(current_path)
        sidecar = path.with_suffix('.json')
        with open(sidecar, 'w') as f:
            json.dump({'rho': {'file': rho_path.name, 'shape': list(field.grid_n)},
                       'current': {'file': current_path.name,
                                   'shape': [field.torus.dim] + list(field.grid_n),
                                   'layout': 'axis, then nodes; face i carries node i to i+1'},
                       'dtype': '<f8', 'order': 'C', 'eps': field.eps,
                       'periods': list(field.torus.periods), 'drift': field.drift.spec}, f, indent=2)
        return {'rho': str(rho_path), 'current': str(current_path), 'sidecar': str(sidecar)}


# --- one-dimensional closed form -------------------------------------------------

def _tilted_1d(U: PeriodicPotential, c: float):
    def value(x):
        return float(U.value(np.array([x]))[0]) - c * x
    return value


def _quadrature(func, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter('error', integrate.IntegrationWarning)
        try:
            return func(*args, **kwargs)
        except integrate.IntegrationWarning as e:
            raise QuadratureFailure(f"Adaptive quadrature did not converge: {e}")


def _max_rise(tilted, tau: float, samples: int = 2048) -> float:
    x = np.linspace(0.0, tau, samples, endpoint=False)
    values = np.array([tilted(t) for t in np.concatenate([x, x + tau])])
    return float(max(np.max(values[i:i + samples + 1]) - values[i] for i in range(samples)))


def flux_1d_closed_form(U: PeriodicPotential, c: float, eps: float,
                        epsrel: float = 1e-9, log: bool = False) -> float:
    """
    tau eps (1 - e^{-c tau / eps}) divided by the double integral of
    e^{(U~(y) - U~(x)) / eps} over x in [0, tau], y in [x, x + tau].
    With log=True returns -eps ln F instead, which stays finite for small eps.
    """
    if U.dim != 1:
        raise InputError("Closed-form flux is one-dimensional")
    if c <= 0 or eps <= 0:
        raise InputError("Closed-form flux needs c > 0 and eps > 0", c=c, eps=eps)
    tau = U.torus.periods[0]
    tilted = _tilted_1d(U, c)
    shift = _max_rise(tilted, tau)

    integral, _ = _quadrature(
        integrate.dblquad,
        lambda y, x: np.exp((tilted(y) - tilted(x) - shift) / eps),
        0.0, tau, lambda x: x, lambda x: x + tau,
        epsabs=0.0, epsrel=epsrel
    )
    if not integral > 0:
        raise QuadratureFailure("Non-positive double integral", integral=integral)

    log_numerator = np.log(tau * eps) + np.log(-np.expm1(-c * tau / eps))
    minus_eps_log = shift - eps * (log_numerator - np.log(integral))
    return float(minus_eps_log) if log else float(np.exp(-minus_eps_log / eps))


def density_1d_closed_form(U: PeriodicPotential, c: float, eps: float, x: Sequence[float],
                           epsrel: float = 1e-11) -> np.ndarray:
    """Normalised stationary density, proportional to int_x^{x+tau} e^{(U~(y) - U~(x)) / eps} dy."""
    tau = U.torus.periods[0]
    tilted = _tilted_1d(U, c)

    def unnormalised(s):
        value, _ = _quadrature(integrate.quad, lambda y: np.exp((tilted(y) - tilted(s)) / eps),
                               s, s + tau, epsabs=0.0, epsrel=epsrel, limit=200)
        return value

    total, _ = _quadrature(integrate.quad, unnormalised, 0.0, tau, epsabs=0.0,
                           epsrel=1e-10, limit=200)
    return np.array([unnormalised(s) for s in np.atleast_1d(x)]) / total


def solve_stationary(drift: TiltedDrift, eps: float, grid_n: Union[int, Sequence[int]]) -> StationaryField:
    return FokkerPlanckSolver().solve_stationary(drift, eps, grid_n)


def flux(field: StationaryField, form: ClosedOneForm) -> FluxEstimate:
    return FokkerPlanckSolver(use_cache=False).flux(field, form)


def entropy_production_check(field: StationaryField, drift: TiltedDrift) -> Dict[str, float]:
    return FokkerPlanckSolver(use_cache=False).entropy_production_check(field, drift)
