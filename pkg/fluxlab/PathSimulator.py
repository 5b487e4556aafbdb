# fluxlab/PathSimulator.py

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .ConfigurationManager import DEFAULT_CONFIG
from .DomainFields import ClosedOneForm, TiltedDrift
from .Errors import InputError, StepTooLarge
from .FokkerPlanckSolver import FluxEstimate

NOISE_CHUNK = 4096


class PathSimulator:
    """Euler-Maruyama sample paths on the cover; flux as the long-time average of int alpha."""

    def __init__(self, drift: TiltedDrift, logger: Optional[logging.Logger] = None,
                 settings: Optional[Dict[str, Any]] = None):
        self.drift = drift
        self.torus = drift.torus
        self.logger = logger or logging.getLogger('fluxlab')
        self.settings = {**DEFAULT_CONFIG['sde'], **(settings or {})}
        self._max_speed: Optional[float] = None

    @property
    def max_speed(self) -> float:
        if self._max_speed is None:
            self._max_speed = self.drift.max_speed()
        return self._max_speed

    def check_step(self, eps: float, dt: float) -> None:
        excursion = dt * self.max_speed + 3.0 * np.sqrt(2.0 * eps * dt)
        if excursion >= 0.5 * self.torus.min_period:
            raise StepTooLarge("A single step could cross half a period", dt=dt, eps=eps,
                               excursion=float(excursion), half_period=0.5 * self.torus.min_period)

    def characteristic_time(self, eps: float) -> float:
        return self.torus.min_period / max(self.max_speed, np.sqrt(eps), 1e-12)

    def _generators(self, seed: int, batch: int) -> List[np.random.Generator]:
        """One counter-based stream per sample, independent of how samples are split over workers."""
        children = np.random.SeedSequence(int(seed)).spawn(batch)
        return [np.random.Generator(np.random.Philox(child)) for child in children]

    def _run_block(self, generators: Sequence[np.random.Generator], eps: float, dt: float,
                   steps: int, burn_in: int) -> Tuple[np.ndarray, np.ndarray]:
        """Lifted positions at the end of burn-in and at the horizon, one row per sample."""
        dim = self.torus.dim
        x = np.array([g.uniform(0.0, 1.0, dim) for g in generators]) * self.torus.L
        scale = np.sqrt(2.0 * eps * dt)
        start = x.copy() if burn_in == 0 else None

        done = 0
        while done < steps:
            chunk = min(NOISE_CHUNK, steps - done)
            noise = np.stack([g.standard_normal((chunk, dim)) for g in generators], axis=1)
            for k in range(chunk):
                x = x + self.drift.eval_drift(x) * dt + scale * noise[k]
                if done + k + 1 == burn_in:
                    start = x.copy()
            done += chunk
        return start, x

    def simulate_endpoints(self, eps: float, dt: Optional[float] = None, T: Optional[float] = None,
                           batch: Optional[int] = None, seed: Optional[int] = None,
                           jobs: int = 1) -> Dict[str, Any]:
        dt = float(dt or self.settings['dt'])
        T = float(T or self.settings['T'])
        batch = int(batch or self.settings['batch'])
        seed = int(self.settings['seed'] if seed is None else seed)
        if eps <= 0 or dt <= 0 or T <= 0:
            raise InputError("eps, dt and T must be positive", eps=eps, dt=dt, T=T)
        if batch < 2:
            raise InputError("Standard errors need at least two samples", batch=batch)
        self.check_step(eps, dt)
        if T < 100.0 * self.characteristic_time(eps):
            self.logger.warning(f"Horizon T={T} is short of 100 characteristic times "
                                f"({100.0 * self.characteristic_time(eps):.3g})")

        steps = int(round(T / dt))
        burn_in = int(round(self.settings['burn_in_fraction'] * steps))
        generators = self._generators(seed, batch)
        blocks = np.array_split(np.arange(batch), max(1, min(int(jobs), batch)))

        def run(block):
            return self._run_block([generators[i] for i in block], eps, dt, steps, burn_in)

        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            results = list(pool.map(run, blocks))

        starts = np.concatenate([r[0] for r in results])
        ends = np.concatenate([r[1] for r in results])
        self.logger.info(f"Simulated {batch} paths: eps={eps}, dt={dt}, T={T}, seed={seed}")
        return {'starts': starts, 'ends': ends, 'duration': (steps - burn_in) * dt,
                'eps': eps, 'dt': dt, 'T': T, 'batch': batch, 'seed': seed}

    def _estimate(self, ensemble: Dict[str, Any], form: ClosedOneForm) -> FluxEstimate:
        if form.torus != self.torus:
            raise InputError("One-form lives on a different torus")
        # alpha is closed, so its integral along the lifted polyline depends on the endpoints only
        per_sample = np.atleast_1d(form.integrate_displacement(ensemble['starts'], ensemble['ends']))
        per_sample = per_sample / ensemble['duration']
        mean = float(np.mean(per_sample))
        stderr = float(np.std(per_sample, ddof=1) / np.sqrt(per_sample.size))
        return FluxEstimate(value=mean, eps=ensemble['eps'], method='sde', uncertainty=stderr,
                            details={'dt': ensemble['dt'], 'T': ensemble['T'],
                                     'batch': ensemble['batch'], 'seed': ensemble['seed']})

    def estimate_flux(self, form: ClosedOneForm, eps: float, dt: Optional[float] = None,
                      T: Optional[float] = None, batch: Optional[int] = None,
                      seed: Optional[int] = None, jobs: int = 1) -> FluxEstimate:
        ensemble = self.simulate_endpoints(eps, dt, T, batch, seed, jobs)
        estimate = self._estimate(ensemble, form)
        self.logger.info(f"SDE flux {estimate.value:.6g} +/- {estimate.uncertainty:.2g}")
        return estimate

    def estimate_fluxes(self, forms: Sequence[ClosedOneForm], eps: float, dt: Optional[float] = None,
                        T: Optional[float] = None, batch: Optional[int] = None,
                        seed: Optional[int] = None, jobs: int = 1) -> List[FluxEstimate]:
        """Several one-forms paired with one shared path ensemble."""
        ensemble = self.simulate_endpoints(eps, dt, T, batch, seed, jobs)
        return [self._estimate(ensemble, form) for form in forms]


def estimate_flux(drift: TiltedDrift, form: ClosedOneForm, eps: float, dt: float, T: float,
                  batch: int, seed: int) -> FluxEstimate:
    return PathSimulator(drift).estimate_flux(form, eps, dt, T, batch, seed)
