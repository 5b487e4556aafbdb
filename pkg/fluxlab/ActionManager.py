# fluxlab/ActionManager.py

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .ConfigurationManager import DEFAULT_CONFIG
from .DomainFields import TiltedDrift, Torus
from .Errors import InputError, NonConvergence


@dataclass
class DiscretePath:
    """Piecewise-linear path on the cover with knot times; fixed knots are not optimised."""
    torus: Torus
    knots: np.ndarray
    times: np.ndarray
    fixed: Optional[np.ndarray] = None

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float).reshape(-1, self.torus.dim)
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        if self.knots.shape[0] < 2:
            raise InputError("A discrete path needs at least two knots", knots=int(self.knots.shape[0]))
        if self.times.shape[0] != self.knots.shape[0]:
            raise InputError("One time per knot is required",
                             knots=int(self.knots.shape[0]), times=int(self.times.shape[0]))
        if np.any(np.diff(self.times) <= 0):
            raise InputError("Knot times must be strictly increasing")
        jumps = np.abs(np.diff(self.knots, axis=0))
        if np.any(jumps >= 0.5 * self.torus.L):
            raise InputError("Consecutive knots are more than half a period apart",
                             segment=int(np.argmax(np.any(jumps >= 0.5 * self.torus.L, axis=1))))
        if self.fixed is None:
            self.fixed = np.zeros(self.knots.shape[0], dtype=bool)
            self.fixed[[0, -1]] = True
        self.fixed = np.asarray(self.fixed, dtype=bool)

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def start(self) -> np.ndarray:
        return self.knots[0]

    @property
    def end(self) -> np.ndarray:
        return self.knots[-1]

    def reversed(self) -> 'DiscretePath':
        times = self.times[-1] + self.times[0] - self.times[::-1]
        return DiscretePath(self.torus, self.knots[::-1].copy(), times, self.fixed[::-1].copy())

    def with_knots(self, knots: np.ndarray) -> 'DiscretePath':
        return DiscretePath(self.torus, knots, self.times, self.fixed)

    def as_rows(self) -> List[Dict[str, float]]:
        rows = []
        for t, x in zip(self.times, self.knots):
            point = list(x) + [0.0] * (2 - len(x))
            rows.append({'t': float(t), 'x': float(point[0]), 'y': float(point[1])})
        return rows


@dataclass
class ActionResult:
    path: DiscretePath
    value: float
    T: float
    converged: bool
    initialisation: str
    restricted: bool = False
    candidates: List[Dict[str, Any]] = field(default_factory=list)

    def describe(self) -> Dict[str, Any]:
        return {'value': self.value, 'T': self.T, 'knots_n': int(self.path.knots.shape[0]),
                'converged': self.converged, 'initialisation': self.initialisation,
                'restricted': self.restricted, 'bound': 'upper'}


class ActionManager:
    """
    Discretised action 1/4 int |phi' - v(phi)|^2 with midpoint quadrature on
    piecewise-linear paths, and fixed-T minimisation over the interior knots.
    """

    STRING_STEP = 0.01
    STRING_ITERATIONS = 300

    def __init__(self, drift: TiltedDrift, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None):
        self.drift = drift
        self.torus = drift.torus
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['action'], **(settings or {})}

    # --- quadrature ----------------------------------------------------------

    def _segments(self, path: DiscretePath):
        d = np.diff(path.knots, axis=0)
        dt = np.diff(path.times)
        mid = 0.5 * (path.knots[1:] + path.knots[:-1])
        return d, dt, mid

    def action(self, path: DiscretePath) -> float:
        d, dt, mid = self._segments(path)
        r = d / dt[:, None] - self.drift.eval_drift(mid)
        return float(0.25 * np.sum(np.sum(r * r, axis=1) * dt))

    def action_gradient(self, path: DiscretePath):
        """Action and its gradient with respect to every knot."""
        d, dt, mid = self._segments(path)
        r = d / dt[:, None] - self.drift.eval_drift(mid)
        value = float(0.25 * np.sum(np.sum(r * r, axis=1) * dt))

        jac_t_r = np.einsum('kji,kj->ki', self.drift.jacobian(mid), r)
        grad = np.zeros_like(path.knots)
        grad[1:] += 0.5 * r - 0.25 * dt[:, None] * jac_t_r
        grad[:-1] += -0.5 * r - 0.25 * dt[:, None] * jac_t_r
        return value, grad

    def identity_residual(self, path: DiscretePath) -> float:
        """|S - (1/4 int |phi' + v|^2 - int <phi', v>)| under the same quadrature."""
        d, dt, mid = self._segments(path)
        velocity = d / dt[:, None]
        v = self.drift.eval_drift(mid)
        plus = 0.25 * np.sum(np.sum((velocity + v) ** 2, axis=1) * dt)
        cross = np.sum(np.sum(velocity * v, axis=1) * dt)
        return float(abs(self.action(path) - (plus - cross)))

    def lower_bound_gap(self, path: DiscretePath) -> float:
        """S minus the integral of -drift-flat, which is the rise of the tilted potential."""
        rise = float(self.drift.tilted_value(path.end) - self.drift.tilted_value(path.start))
        return self.action(path) - rise

    def l2_lower_bound(self, path: DiscretePath) -> float:
        d, dt, mid = self._segments(path)
        speed = np.sqrt(np.sum(np.sum((d / dt[:, None]) ** 2, axis=1) * dt))
        drift = np.sqrt(np.sum(np.sum(self.drift.eval_drift(mid) ** 2, axis=1) * dt))
        return float(0.25 * (speed - drift) ** 2)

    # --- paths -----------------------------------------------------------------

    def integral_curve(self, x0: Sequence[float], T: float, dt: float) -> DiscretePath:
        """Forward RK4 integral curve of the drift on the cover, sampled every dt."""
        if T <= 0 or dt <= 0:
            raise InputError("Integral curve needs positive T and dt", T=T, dt=dt)
        steps = max(1, int(round(T / dt)))
        h = T / steps
        x = np.asarray(x0, dtype=float).reshape(self.torus.dim)
        knots = [x.copy()]
        for _ in range(steps):
            k1 = self.drift.eval_drift(x)
            k2 = self.drift.eval_drift(x + 0.5 * h * k1)
            k3 = self.drift.eval_drift(x + 0.5 * h * k2)
            k4 = self.drift.eval_drift(x + h * k3)
            x = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            knots.append(x.copy())
        return DiscretePath(self.torus, np.array(knots), np.linspace(0.0, T, steps + 1))

    def straight_path(self, start: np.ndarray, end: np.ndarray, T: float, knots_n: int) -> DiscretePath:
        s = np.linspace(0.0, 1.0, knots_n)[:, None]
        return DiscretePath(self.torus, start + s * (end - start), np.linspace(0.0, T, knots_n))

    def _reparametrise(self, images: np.ndarray) -> np.ndarray:
        arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(images, axis=0), axis=1))])
        if arc[-1] == 0.0:
            return images
        target = np.linspace(0.0, arc[-1], images.shape[0])
        return np.stack([np.interp(target, arc, images[:, k]) for k in range(self.torus.dim)], axis=1)

    def string_path(self, start: np.ndarray, end: np.ndarray, T: float, knots_n: int) -> DiscretePath:
        """Images relaxed downhill in the tilted potential with fixed ends, kept at equal arclength."""
        images = self.straight_path(start, end, T, knots_n).knots
        for _ in range(self.STRING_ITERATIONS):
            images[1:-1] += self.STRING_STEP * self.drift.eval_drift(images[1:-1])
            images = self._reparametrise(images)
        return DiscretePath(self.torus, images, np.linspace(0.0, T, knots_n))

    # --- minimisation ------------------------------------------------------------

    def _optimise(self, path: DiscretePath):
        free = ~path.fixed
        base = path.knots.copy()

        def objective(z):
            knots = base.copy()
            knots[free] = z.reshape(-1, self.torus.dim)
            value, grad = self.action_gradient(DiscretePath(self.torus, knots, path.times, path.fixed))
            return value, grad[free].ravel()

        if not np.any(free):
            return path, self.action(path), True

        result = minimize(objective, base[free].ravel(), jac=True, method='L-BFGS-B',
                          options={'maxiter': int(self.settings['max_iterations'])})
        knots = base.copy()
        knots[free] = result.x.reshape(-1, self.torus.dim)
        converged = bool(result.success) or result.nit < int(self.settings['max_iterations'])
        self.logger.debug(f"L-BFGS-B: {result.nit} iterations, action {result.fun:.6g}, {result.message}")
        return path.with_knots(knots), float(result.fun), converged

    def _admissible(self, path: DiscretePath, sinks: Sequence[np.ndarray]) -> bool:
        """No interior knot within the trapping radius of an index-0 lift other than the endpoints."""
        if not len(sinks):
            return True
        radius = DEFAULT_CONFIG['morse_graph']['trap_factor'] * self.torus.min_period
        interior = path.knots[1:-1]
        for sink in sinks:
            offset = self.torus.displacement(interior, np.asarray(sink, dtype=float))
            near = np.linalg.norm(offset, axis=1) < radius
            for lift in interior[near] + offset[near]:
                if (np.linalg.norm(lift - path.start) > radius
                        and np.linalg.norm(lift - path.end) > radius):
                    return False
        return True

    def minimize_action(self, start: Sequence[float], end: Sequence[float], T: float,
                        knots_n: Optional[int] = None,
                        initial_paths: Optional[Sequence[DiscretePath]] = None,
                        restricted_sinks: Optional[Sequence[np.ndarray]] = None,
                        strict: bool = False) -> ActionResult:
        knots_n = int(knots_n or self.settings['knots_n'])
        if T <= 0:
            raise InputError("Time horizon must be positive", T=T)
        if knots_n < 2:
            raise InputError("At least two knots are required", knots_n=knots_n)
        start = np.asarray(start, dtype=float).reshape(self.torus.dim)
        end = np.asarray(end, dtype=float).reshape(self.torus.dim)

        if np.allclose(start, end):
            # zero at a rest point; otherwise the constant path is still the natural bound
            constant = DiscretePath(self.torus, np.repeat(start[None, :], knots_n, axis=0),
                                    np.linspace(0.0, T, knots_n))
            return ActionResult(constant, self.action(constant), T, True, 'constant')

        starts = [('straight', self.straight_path(start, end, T, knots_n)),
                  ('string', self.string_path(start, end, T, knots_n))]
        starts += [(f'user_{i}', p) for i, p in enumerate(initial_paths or [])]

        best: Optional[ActionResult] = None
        candidates = []
        for name, initial in starts:
            path, value, converged = self._optimise(initial)
            admissible = restricted_sinks is None or self._admissible(path, restricted_sinks)
            candidates.append({'initialisation': name, 'value': value,
                               'converged': converged, 'admissible': admissible})
            if not admissible:
                self.logger.debug(f"Discarding {name} candidate: passes near another index-0 zero")
                continue
            if best is None or value < best.value:
                best = ActionResult(path, value, T, converged, name,
                                    restricted=restricted_sinks is not None)

        if best is None:
            raise NonConvergence("Every candidate path passes near another index-0 zero",
                                 candidates=len(candidates))
        best.candidates = candidates
        if not best.converged:
            if strict:
                raise NonConvergence("Action minimisation hit its iteration budget", best=best,
                                     value=best.value, T=T)
            self.logger.warning(f"Action minimisation at T={T} did not converge; "
                                f"keeping best value {best.value:.6g} as an upper bound")
        self.logger.info(f"Action upper bound {best.value:.6f} at T={T} "
                         f"({best.initialisation} start, {knots_n} knots)")
        return best

    def quasipotential_upper_bound(self, start: Sequence[float], end: Sequence[float],
                                   T_list: Optional[Sequence[float]] = None,
                                   knots_n: Optional[int] = None, jobs: int = 1,
                                   **options) -> ActionResult:
        """Best minimised action over a sweep of horizons; an upper bound on the quasipotential."""
        T_list = list(T_list or self.settings['T_list'])
        if not T_list:
            raise InputError("T_list must not be empty")

        def run(T):
            return self.minimize_action(start, end, T, knots_n, **options)

        with ThreadPoolExecutor(max_workers=max(1, int(jobs))) as pool:
            results = list(pool.map(run, T_list))

        best = min(results, key=lambda r: r.value)
        best.candidates = [{'T': r.T, 'value': r.value, 'converged': r.converged,
                            'initialisation': r.initialisation} for r in results]
        return best


def action(drift: TiltedDrift, path: DiscretePath) -> float:
    return ActionManager(drift).action(path)


def minimize_action(drift: TiltedDrift, start: Sequence[float], end: Sequence[float],
                    T: float, knots_n: int = 200) -> ActionResult:
    return ActionManager(drift).minimize_action(start, end, T, knots_n)
