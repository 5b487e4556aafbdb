# fluxlab/CriticalPointManager.py

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ConfigurationManager import DEFAULT_CONFIG
from .DomainFields import TiltedDrift
from .Errors import (DegenerateZero, IncompleteSweep, InputError, NonSymmetricJacobian,
                     NotAZero)


@dataclass
class CriticalPoint:
    """Zero of the drift on the torus, with its Morse index at Ũ."""
    position: np.ndarray
    index: int
    tilted_value: float
    hessian_eigs: np.ndarray
    newton_residual: float

    @property
    def is_minimum(self) -> bool:
        return self.index == 0

    @property
    def is_saddle(self) -> bool:
        return self.index == 1

    def as_row(self) -> Dict[str, Any]:
        pos = list(self.position) + [float('nan')] * (2 - len(self.position))
        eigs = list(self.hessian_eigs) + [float('nan')] * (2 - len(self.hessian_eigs))
        return {
            'x': float(pos[0]), 'y': float(pos[1]), 'index': int(self.index),
            'tilted_value': float(self.tilted_value),
            'eig1': float(eigs[0]), 'eig2': float(eigs[1]),
            'residual': float(self.newton_residual)
        }


class CriticalPointManager:
    """Seeds, polishes, deduplicates and classifies the zeros of a tilted drift."""

    ZERO_TOLERANCE = 1e-8
    SYMMETRY_TOLERANCE = 1e-6
    STEP_CAP_FRACTION = 0.1

    def __init__(self, drift: TiltedDrift, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None):
        self.drift = drift
        self.torus = drift.torus
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['critical_points'], **(settings or {})}
        self.report: Dict[str, Any] = {}

    # --- seeding and Newton ------------------------------------------------

    def _seed_points(self, grid_n: int) -> np.ndarray:
        """Centres of mesh cells in which every drift component changes sign (inclusive)."""
        h = self.torus.L / grid_n
        axes = [np.arange(grid_n) * step for step in h]
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1)
        values = self.drift.eval_drift(mesh)

        if self.torus.dim == 1:
            v = values[..., 0]
            nxt = np.roll(v, -1)
            mask = np.minimum(v, nxt) <= 0.0
            mask &= np.maximum(v, nxt) >= 0.0
            return (mesh[mask] + 0.5 * h).reshape(-1, 1)

        corners = np.stack([
            values,
            np.roll(values, -1, axis=0),
            np.roll(values, -1, axis=1),
            np.roll(np.roll(values, -1, axis=0), -1, axis=1)
        ], axis=0)
        lo = corners.min(axis=0)
        hi = corners.max(axis=0)
        mask = np.all((lo <= 0.0) & (hi >= 0.0), axis=-1)
        return mesh[mask] + 0.5 * h

    def newton(self, seeds: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = seeds.copy()
        cap = self.STEP_CAP_FRACTION * self.torus.min_period
        active = np.ones(len(x), dtype=bool)

        for _ in range(int(self.settings['max_iterations'])):
            if not np.any(active):
                break
            xa = x[active]
            v = self.drift.eval_drift(xa)
            jac = self.drift.jacobian(xa)
            det = np.linalg.det(jac)
            solvable = np.abs(det) > 1e-14

            step = np.zeros_like(xa)
            if np.any(solvable):
                step[solvable] = np.linalg.solve(jac[solvable], v[solvable][..., None])[..., 0]
            norms = np.linalg.norm(step, axis=-1)
            scale = np.where(norms > cap, cap / np.maximum(norms, 1e-300), 1.0)
            xa = xa - step * scale[:, None]

            idx = np.flatnonzero(active)
            x[idx] = xa
            residual = np.linalg.norm(self.drift.eval_drift(xa), axis=-1)
            done = (residual < self.settings['newton_tol']) | ~solvable
            active[idx[done]] = False

        residuals = np.linalg.norm(self.drift.eval_drift(x), axis=-1)
        return x, residuals

    def _dedup(self, points: np.ndarray, residuals: np.ndarray) -> List[int]:
        radius = self.settings['dedup_factor'] * self.torus.min_period
        kept: List[int] = []
        for i in np.argsort(residuals):
            if all(self.torus.distance(points[i], points[j]) > radius for j in kept):
                kept.append(int(i))
        return kept

    # --- public operations -------------------------------------------------

    def classify(self, x: Sequence[float]) -> Tuple[int, np.ndarray]:
        """Index and Hessian spectrum of Ũ at a zero of the drift."""
        x = np.asarray(x, dtype=float).reshape(self.torus.dim)
        residual = float(np.linalg.norm(self.drift.eval_drift(x)))
        if residual >= self.ZERO_TOLERANCE:
            raise NotAZero("Point is not a zero of the drift", residual=residual)

        # finite-difference Jacobian of -drift; symmetric for drifts dual to a closed form
        step = 1e-6 * self.torus.min_period
        columns = []
        for k in range(self.torus.dim):
            e = np.zeros(self.torus.dim)
            e[k] = step
            columns.append(-(self.drift.eval_drift(x + e) - self.drift.eval_drift(x - e)) / (2 * step))
        fd = np.stack(columns, axis=-1)
        asymmetry = float(np.max(np.abs(fd - fd.T)))
        scale = max(1.0, float(np.max(np.abs(fd))))
        if asymmetry > self.SYMMETRY_TOLERANCE * scale:
            raise NonSymmetricJacobian("Drift Jacobian is not symmetric", asymmetry=asymmetry)

        hess = -self.drift.jacobian(x)
        eigs = np.linalg.eigvalsh(0.5 * (hess + hess.T))
        return int(np.sum(eigs < 0)), eigs

    def find_critical_points(self, grid_n: Optional[int] = None) -> List[CriticalPoint]:
        grid_n = int(grid_n or self.settings['grid_n'])
        if grid_n < 32:
            raise InputError("Seed mesh needs at least 32 cells per axis", grid_n=grid_n)

        seeds = self._seed_points(grid_n)
        self.logger.debug(f"Critical point sweep: {len(seeds)} seed cells on a {grid_n}-mesh")
        points, residuals = self.newton(seeds)
        converged = residuals < self.settings['residual_tol']
        points = self.torus.wrap(points[converged])
        points = np.where(points >= self.torus.L, points - self.torus.L, points)
        residuals = residuals[converged]

        critical_points = []
        for i in self._dedup(points, residuals):
            index, eigs = self.classify(points[i])
            if np.min(np.abs(eigs)) < self.settings['hyperbolicity_tol']:
                raise DegenerateZero("Zero with a near-vanishing Hessian eigenvalue",
                                     position=points[i].tolist(), eigenvalues=eigs.tolist())
            critical_points.append(CriticalPoint(
                position=points[i].copy(),
                index=index,
                tilted_value=float(self.drift.tilted_value(points[i])),
                hessian_eigs=eigs,
                newton_residual=float(residuals[i])
            ))

        critical_points.sort(key=lambda cp: tuple(cp.position))
        self._check_poincare_hopf(critical_points)
        self._check_saddle_values(critical_points)

        counts = np.bincount([cp.index for cp in critical_points], minlength=self.torus.dim + 1)
        self.logger.info(
            f"Found {len(critical_points)} critical points (index counts {counts.tolist()}), "
            f"Smale transversality unverified"
        )
        self.report = {
            'count': len(critical_points),
            'index_counts': counts.tolist(),
            'transversality': 'unverified',
            'distinct_saddle_values': self._distinct_saddle_values,
            'grid_n': grid_n
        }
        return critical_points

    def _check_poincare_hopf(self, critical_points: List[CriticalPoint]) -> None:
        euler = sum((-1) ** cp.index for cp in critical_points)
        if euler != 0 or not critical_points:
            raise IncompleteSweep("Index sum does not vanish on the torus",
                                  index_sum=euler, found=len(critical_points))

    def _check_saddle_values(self, critical_points: List[CriticalPoint]) -> None:
        values = sorted(cp.tilted_value for cp in critical_points if cp.is_saddle)
        tol = self.settings['hyperbolicity_tol']
        clashes = [(a, b) for a, b in zip(values, values[1:]) if abs(b - a) < tol]
        self._distinct_saddle_values = not clashes
        if clashes:
            self.logger.warning(f"Index-1 zeros share tilted values: {clashes}")

    def track_vertex(self, previous: CriticalPoint,
                     candidates: Sequence[CriticalPoint]) -> CriticalPoint:
        """Nearest index-0 continuation of a vertex after a change of tilt."""
        minima = [cp for cp in candidates if cp.is_minimum]
        if not minima:
            raise IncompleteSweep("No index-0 zero to continue the vertex to")
        distances = [float(self.torus.distance(previous.position, cp.position)) for cp in minima]
        return minima[int(np.argmin(distances))]


def find_critical_points(drift: TiltedDrift, grid_n: int = 64,
                         logger: Optional[logging.Logger] = None,
                         settings: Optional[Dict[str, Any]] = None) -> List[CriticalPoint]:
    return CriticalPointManager(drift, logger, settings).find_critical_points(grid_n)


def classify(drift: TiltedDrift, x: Sequence[float]) -> Tuple[int, np.ndarray]:
    return CriticalPointManager(drift).classify(x)
