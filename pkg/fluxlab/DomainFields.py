# fluxlab/DomainFields.py

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .Errors import AmbiguousWinding, ConfigurationError, InputError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Torus:
    """Flat torus R^n / (L_1 Z x ... x L_n Z) with n in {1, 2}."""
    periods: Tuple[float, ...]

    def __post_init__(self):
        if len(self.periods) not in (1, 2):
            raise InputError("Only 1- and 2-dimensional tori are supported", dim=len(self.periods))
        if any(p <= 0 for p in self.periods):
            raise InputError("Torus periods must be strictly positive", periods=self.periods)

    @property
    def dim(self) -> int:
        return len(self.periods)

    @property
    def L(self) -> np.ndarray:
        return np.asarray(self.periods, dtype=float)

    @property
    def min_period(self) -> float:
        return float(min(self.periods))

    @property
    def volume(self) -> float:
        return float(np.prod(self.L))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        return np.mod(np.asarray(x, dtype=float), self.L)

    def lift_index(self, x: np.ndarray) -> np.ndarray:
        return np.floor(np.asarray(x, dtype=float) / self.L).astype(int)

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Minimum-image displacement from a to b."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        return d - self.L * np.round(d / self.L)

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)


def _as_points(x: np.ndarray, dim: int) -> Tuple[np.ndarray, Tuple[int, ...]]:
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != dim:
        raise InputError("Point dimension does not match the torus", expected=dim, got=x.shape[-1])
    return x, x.shape[:-1]


class PeriodicPotential:
    """Periodic U with gradient and Hessian, vectorised over (..., dim) inputs."""

    representation = 'abstract'

    def __init__(self, torus: Torus):
        self.torus = torus

    @property
    def dim(self) -> int:
        return self.torus.dim

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> Dict[str, Any]:
        return {'representation': self.representation}


class AnalyticPotential(PeriodicPotential):
    """Closed-form preset given as value/gradient/Hessian callables on (n, dim) arrays."""

    representation = 'analytic'

    def __init__(self, torus: Torus, name: str,
                 value_fn: Callable, gradient_fn: Callable, hessian_fn: Callable):
        super().__init__(torus)
        self.name = name
        self._value = value_fn
        self._gradient = gradient_fn
        self._hessian = hessian_fn

    def value(self, x):
        pts, shape = _as_points(x, self.dim)
        return self._value(pts.reshape(-1, self.dim)).reshape(shape)

    def gradient(self, x):
        pts, shape = _as_points(x, self.dim)
        return self._gradient(pts.reshape(-1, self.dim)).reshape(shape + (self.dim,))

    def hessian(self, x):
        pts, shape = _as_points(x, self.dim)
        return self._hessian(pts.reshape(-1, self.dim)).reshape(shape + (self.dim, self.dim))

    def describe(self):
        return {'representation': self.representation, 'preset': self.name}


class TrigPotential(PeriodicPotential):
    """U(x) = sum_j amp_j cos(2 pi k_j . (x / L) + phase_j)."""

    representation = 'trig'

    def __init__(self, torus: Torus, terms: Sequence[Sequence[float]]):
        super().__init__(torus)
        terms = np.atleast_2d(np.asarray(terms, dtype=float))
        if terms.size == 0:
            terms = np.zeros((0, torus.dim + 2))
        if terms.shape[1] != torus.dim + 2:
            raise ConfigurationError(
                "Trig terms need one wave number per axis plus amplitude and phase",
                dim=torus.dim, columns=terms.shape[1]
            )
        self.terms = terms
        self.wave_numbers = terms[:, :torus.dim]
        if not np.allclose(self.wave_numbers, np.round(self.wave_numbers)):
            raise ConfigurationError("Trig wave numbers must be integers")
        self.K = TWO_PI * self.wave_numbers / torus.L
        self.amplitudes = terms[:, torus.dim]
        self.phases = terms[:, torus.dim + 1]

    def _argument(self, pts):
        return pts @ self.K.T + self.phases

    def value(self, x):
        pts, shape = _as_points(x, self.dim)
        arg = self._argument(pts.reshape(-1, self.dim))
        return (np.cos(arg) @ self.amplitudes).reshape(shape)

    def gradient(self, x):
        pts, shape = _as_points(x, self.dim)
        arg = self._argument(pts.reshape(-1, self.dim))
        grad = -(np.sin(arg) * self.amplitudes) @ self.K
        return grad.reshape(shape + (self.dim,))

    def hessian(self, x):
        pts, shape = _as_points(x, self.dim)
        arg = self._argument(pts.reshape(-1, self.dim))
        weights = np.cos(arg) * self.amplitudes
        hess = -np.einsum('nj,ja,jb->nab', weights, self.K, self.K)
        return hess.reshape(shape + (self.dim, self.dim))

    def describe(self):
        return {'representation': self.representation, 'trig': self.terms.tolist()}


class GridPotential(PeriodicPotential):
    """Samples on a periodic lattice with cubic (1D) or bicubic (2D) interpolation."""

    representation = 'grid'
    PAD = 4

    def __init__(self, torus: Torus, samples: np.ndarray, source: Optional[str] = None):
        super().__init__(torus)
        samples = np.asarray(samples, dtype=float)
        if samples.ndim != torus.dim:
            raise ConfigurationError("Grid sample array rank must match the torus dimension",
                                     rank=samples.ndim, dim=torus.dim)
        self.samples = samples
        self.source = source
        self.h = torus.L / np.asarray(samples.shape)

        if torus.dim == 1:
            n = samples.shape[0]
            nodes = np.arange(n + 1) * self.h[0]
            values = np.append(samples, samples[0])
            self._spline = CubicSpline(nodes, values, bc_type='periodic')
        else:
            padded = np.pad(samples, self.PAD, mode='wrap')
            ax = (np.arange(padded.shape[0]) - self.PAD) * self.h[0]
            ay = (np.arange(padded.shape[1]) - self.PAD) * self.h[1]
            self._spline = RectBivariateSpline(ax, ay, padded, kx=3, ky=3, s=0)

    def _eval(self, x, order: Tuple[int, ...]):
        pts, shape = _as_points(x, self.dim)
        flat = self.torus.wrap(pts.reshape(-1, self.dim))
        if self.dim == 1:
            return self._spline(flat[:, 0], order[0]).reshape(shape)
        return self._spline.ev(flat[:, 0], flat[:, 1], dx=order[0], dy=order[1]).reshape(shape)

    def value(self, x):
        return self._eval(x, (0, 0))

    def gradient(self, x):
        if self.dim == 1:
            return self._eval(x, (1,))[..., None]
        return np.stack([self._eval(x, (1, 0)), self._eval(x, (0, 1))], axis=-1)

    def hessian(self, x):
        if self.dim == 1:
            return self._eval(x, (2,))[..., None, None]
        hxx = self._eval(x, (2, 0))
        hxy = self._eval(x, (1, 1))
        hyy = self._eval(x, (0, 2))
        return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

    def describe(self):
        return {'representation': self.representation, 'grid': {
            'file': self.source, 'shape': list(self.samples.shape), 'interpolation': 'cubic'}}


class CompositePotential(PeriodicPotential):
    """Weighted sum of potentials on one torus."""

    representation = 'composite'

    def __init__(self, parts: Sequence[PeriodicPotential], weights: Sequence[float]):
        if not parts:
            raise InputError("A composite potential needs at least one part")
        super().__init__(parts[0].torus)
        self.parts = list(parts)
        self.weights = [float(w) for w in weights]

    def value(self, x):
        return sum(w * p.value(x) for p, w in zip(self.parts, self.weights))

    def gradient(self, x):
        return sum(w * p.gradient(x) for p, w in zip(self.parts, self.weights))

    def hessian(self, x):
        return sum(w * p.hessian(x) for p, w in zip(self.parts, self.weights))

    def describe(self):
        return {'representation': self.representation,
                'parts': [p.describe() for p in self.parts], 'weights': self.weights}


# --- presets ----------------------------------------------------------------

_NR_A = float(np.arccos(0.25))


def _nr2006_value(p):
    x, y = p[:, 0], p[:, 1]
    theta = x - y - 4.0 * np.cos(y - _NR_A)
    return 3.0 - np.sin(y) - 2.0 * np.cos(theta)


def _nr2006_gradient(p):
    x, y = p[:, 0], p[:, 1]
    theta = x - y - 4.0 * np.cos(y - _NR_A)
    theta_y = 4.0 * np.sin(y - _NR_A) - 1.0
    ux = 2.0 * np.sin(theta)
    uy = theta_y * ux - np.cos(y)
    return np.stack([ux, uy], axis=-1)


def _nr2006_hessian(p):
    x, y = p[:, 0], p[:, 1]
    theta = x - y - 4.0 * np.cos(y - _NR_A)
    theta_y = 4.0 * np.sin(y - _NR_A) - 1.0
    theta_yy = 4.0 * np.cos(y - _NR_A)
    uxx = 2.0 * np.cos(theta)
    uxy = uxx * theta_y
    uyy = np.sin(y) + uxx * theta_y ** 2 + 2.0 * np.sin(theta) * theta_yy
    return np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -2)


def _cos1d(torus):
    return AnalyticPotential(
        torus, 'cos1d',
        lambda p: np.cos(p[:, 0]),
        lambda p: -np.sin(p),
        lambda p: -np.cos(p)[:, :, None],
    )


def _cos2d(torus):
    def hess(p):
        out = np.zeros((p.shape[0], 2, 2))
        out[:, 0, 0] = -np.cos(p[:, 0])
        out[:, 1, 1] = -np.cos(p[:, 1])
        return out
    return AnalyticPotential(
        torus, 'cos2d',
        lambda p: np.cos(p[:, 0]) + np.cos(p[:, 1]),
        lambda p: -np.sin(p),
        hess,
    )


# two wells one unit apart in height, steep enough that r = 0.2 balls hold most of their mass at eps = 0.1
_TW = {'a': 2.5, 'b': 0.5, 'g': 0.3, 'k': 10.0}


def _twowell(torus):
    a, b, g, k = _TW['a'], _TW['b'], _TW['g'], _TW['k']

    def value(p):
        x, y = p[:, 0], p[:, 1]
        return a * np.cos(2 * x) + b * np.sin(x) + g * np.cos(x) + k * np.cos(y)

    def gradient(p):
        x, y = p[:, 0], p[:, 1]
        ux = -2 * a * np.sin(2 * x) + b * np.cos(x) - g * np.sin(x)
        uy = -k * np.sin(y)
        return np.stack([ux, uy], axis=-1)

    def hessian(p):
        x, y = p[:, 0], p[:, 1]
        out = np.zeros((p.shape[0], 2, 2))
        out[:, 0, 0] = -4 * a * np.cos(2 * x) - b * np.sin(x) - g * np.cos(x)
        out[:, 1, 1] = -k * np.cos(y)
        return out

    return AnalyticPotential(torus, 'twowell', value, gradient, hessian)


def _zero(torus):
    d = torus.dim
    return AnalyticPotential(
        torus, 'zero',
        lambda p: np.zeros(p.shape[0]),
        lambda p: np.zeros_like(p),
        lambda p: np.zeros((p.shape[0], d, d)),
    )


PRESETS: Dict[str, Dict[str, Any]] = {
    'nr2006': {'periods': (TWO_PI, TWO_PI), 'build': lambda t: AnalyticPotential(
        t, 'nr2006', _nr2006_value, _nr2006_gradient, _nr2006_hessian)},
    'cos1d': {'periods': (TWO_PI,), 'build': _cos1d},
    'cos2d': {'periods': (TWO_PI, TWO_PI), 'build': _cos2d},
    'twowell': {'periods': (TWO_PI, TWO_PI), 'build': _twowell},
    'zero': {'periods': None, 'build': _zero},
}


def load_grid_samples(path: str, shape: Tuple[int, ...]) -> np.ndarray:
    """Flat little-endian float64 file, first axis slowest."""
    data = np.fromfile(path, dtype='<f8')
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ConfigurationError("Grid file size does not match nx/ny", file=path,
                                 expected=expected, found=int(data.size))
    return data.reshape(shape)


class ClosedOneForm:
    """alpha = harmonic - d(primitive): a constant covector plus an exact part."""

    def __init__(self, torus: Torus, harmonic: Sequence[float],
                 primitive: Optional[PeriodicPotential] = None):
        self.torus = torus
        self.harmonic = np.asarray(harmonic, dtype=float).reshape(torus.dim)
        self.primitive = primitive

    @property
    def is_exact(self) -> bool:
        return bool(np.all(self.harmonic == 0.0))

    def covector(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        values = np.broadcast_to(self.harmonic, x.shape).copy()
        if self.primitive is not None:
            values -= self.primitive.gradient(x)
        return values

    def integrate_displacement(self, start: np.ndarray, end: np.ndarray) -> np.ndarray:
        """Exact integral along any path on the cover joining start to end."""
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        total = (end - start) @ self.harmonic
        if self.primitive is not None:
            total = total - (self.primitive.value(end) - self.primitive.value(start))
        return total

    def line_integral(self, path: 'LiftedPath') -> float:
        pts = path.points
        segments = self.integrate_displacement(pts[:-1], pts[1:])
        return float(np.sum(segments))

    def loop_integral(self, axis: int) -> float:
        return float(self.harmonic[axis] * self.torus.L[axis])

    def plus_exact(self, potential: PeriodicPotential, weight: float = 1.0) -> 'ClosedOneForm':
        """Return alpha + weight * d(potential)."""
        parts, weights = [potential], [-weight]
        if self.primitive is not None:
            parts.insert(0, self.primitive)
            weights.insert(0, 1.0)
        return ClosedOneForm(self.torus, self.harmonic, CompositePotential(parts, weights))

    @staticmethod
    def combine(forms: Sequence['ClosedOneForm'], coefficients: Sequence[float]) -> 'ClosedOneForm':
        torus = forms[0].torus
        harmonic = sum(c * f.harmonic for f, c in zip(forms, coefficients))
        parts = [(f.primitive, c) for f, c in zip(forms, coefficients) if f.primitive is not None]
        primitive = None
        if parts:
            primitive = CompositePotential([p for p, _ in parts], [c for _, c in parts])
        return ClosedOneForm(torus, harmonic, primitive)

    @classmethod
    def from_name(cls, torus: Torus, name: str) -> 'ClosedOneForm':
        axes = {'dx': 0, 'dy': 1}
        if name not in axes or axes[name] >= torus.dim:
            raise ConfigurationError(f"Unknown one-form {name!r} for a {torus.dim}D torus")
        harmonic = np.zeros(torus.dim)
        harmonic[axes[name]] = 1.0
        return cls(torus, harmonic)


class LiftedPath:
    """Polyline on the universal cover.

    Torus-coordinate polylines are accepted when either explicit deck offsets
    are supplied or every raw step is shorter than half a period; a longer raw
    step could be a seam crossing or a genuine jump, so it is rejected.
    """

    def __init__(self, torus: Torus, points: np.ndarray, lifted: bool = True,
                 deck_offsets: Optional[np.ndarray] = None):
        pts, _ = _as_points(points, torus.dim)
        pts = pts.reshape(-1, torus.dim)
        if pts.shape[0] < 2:
            raise InputError("A path needs at least two points", count=int(pts.shape[0]))
        self.torus = torus

        if not lifted:
            if deck_offsets is not None:
                offsets = np.asarray(deck_offsets, dtype=float).reshape(pts.shape)
                pts = pts + offsets * torus.L
            else:
                steps = np.abs(np.diff(pts, axis=0))
                if np.any(steps > 0.5 * torus.L):
                    k = int(np.argmax(np.any(steps > 0.5 * torus.L, axis=1)))
                    raise AmbiguousWinding(
                        "Segment longer than half a period without lift information", segment=k)
        self.points = pts

    def reversed(self) -> 'LiftedPath':
        return LiftedPath(self.torus, self.points[::-1].copy())

    def concatenate(self, other: 'LiftedPath') -> 'LiftedPath':
        if not np.allclose(self.points[-1], other.points[0], atol=1e-12):
            raise InputError("Paths must share the junction point to be concatenated")
        return LiftedPath(self.torus, np.vstack([self.points, other.points[1:]]))

    @property
    def displacement(self) -> np.ndarray:
        return self.points[-1] - self.points[0]


class TiltedDrift:
    """v = -grad U + tilt on a flat torus, with lifted primitive U~ = U - tilt . x."""

    def __init__(self, potential: PeriodicPotential, tilt: Sequence[float],
                 spec: Optional[Dict[str, Any]] = None,
                 direction: Optional[Sequence[float]] = None):
        self.potential = potential
        self.torus = potential.torus
        self.tilt = np.asarray(tilt, dtype=float).reshape(self.torus.dim)
        self.spec = spec if spec is not None else {**potential.describe(),
                                                   'tilt': self.tilt.tolist(),
                                                   'periods': list(self.torus.periods)}
        self._direction = None if direction is None else np.asarray(direction, dtype=float)

    @property
    def dim(self) -> int:
        return self.torus.dim

    @property
    def c(self) -> float:
        return float(np.linalg.norm(self.tilt))

    def tilt_direction(self) -> np.ndarray:
        """Unit covector beta with tilt = c * beta; the first axis when c = 0."""
        if self.c > 0:
            return self.tilt / self.c
        if self._direction is not None and np.linalg.norm(self._direction) > 0:
            return self._direction / np.linalg.norm(self._direction)
        beta = np.zeros(self.dim)
        beta[0] = 1.0
        return beta

    def eval_drift(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return -self.potential.gradient(self.torus.wrap(x)) + self.tilt

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return -self.potential.hessian(self.torus.wrap(np.asarray(x, dtype=float)))

    def tilted_value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pts, _ = _as_points(x, self.dim)
        return self.potential.value(self.torus.wrap(pts)) - pts @ self.tilt

    def lift_primitive(self, base: Optional[Sequence[float]] = None,
                       window_periods: Optional[Sequence[int]] = None) -> Callable[[np.ndarray], np.ndarray]:
        """U~ restricted to a window of whole periods centred on base."""
        if base is None or window_periods is None:
            return self.tilted_value

        base = np.asarray(base, dtype=float)
        half = 0.5 * np.asarray(window_periods, dtype=float) * self.torus.L

        def primitive(x):
            pts, _ = _as_points(x, self.dim)
            if np.any(np.abs(pts - base) > half + 1e-12):
                raise InputError("Point outside the cover window", base=base.tolist(),
                                 window_periods=list(window_periods))
            return self.tilted_value(pts)

        return primitive

    def form(self) -> ClosedOneForm:
        """drift-flat = tilt - dU."""
        return ClosedOneForm(self.torus, self.tilt, self.potential)

    def with_tilt(self, c: float, direction: Optional[Sequence[float]] = None) -> 'TiltedDrift':
        beta = np.asarray(direction, dtype=float) if direction is not None else self.tilt_direction()
        beta = beta / np.linalg.norm(beta)
        spec = {**self.spec, 'tilt': (c * beta).tolist()}
        return TiltedDrift(self.potential, c * beta, spec=spec, direction=beta)

    def max_speed(self, grid_n: int = 256) -> float:
        axes = [np.arange(grid_n) * L / grid_n for L in self.torus.periods]
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, self.dim)
        return float(np.max(np.linalg.norm(self.eval_drift(mesh), axis=-1)))

    def key(self) -> str:
        return json.dumps(self.spec, sort_keys=True)

    @classmethod
    def from_spec(cls, spec: Dict[str, Any], base_directory: Optional[str] = None) -> 'TiltedDrift':
        """Build from {"preset"|"trig"|"grid": ..., "tilt": [...], "periods": [...]}."""
        kinds = [k for k in ('preset', 'trig', 'grid') if k in spec]
        if len(kinds) != 1:
            raise ConfigurationError("Potential spec needs exactly one of preset, trig, grid",
                                     keys=sorted(spec))
        unknown = set(spec) - {'preset', 'trig', 'grid', 'tilt', 'periods', 'direction'}
        if unknown:
            raise ConfigurationError(f"Unknown potential spec keys: {', '.join(sorted(unknown))}")

        periods = spec.get('periods')
        tilt = spec.get('tilt')
        kind = kinds[0]

        if kind == 'preset':
            name = spec['preset']
            if name not in PRESETS:
                raise ConfigurationError(f"Unknown preset {name!r}", available=sorted(PRESETS))
            fixed = PRESETS[name]['periods']
            if fixed is not None:
                if periods is not None and not np.allclose(periods, fixed):
                    raise ConfigurationError(f"Preset {name} is defined on periods {fixed}")
                periods = fixed
            elif periods is None:
                dim = len(tilt) if tilt is not None else 2
                periods = (TWO_PI,) * dim
            torus = Torus(tuple(float(p) for p in periods))
            potential = PRESETS[name]['build'](torus)
        elif kind == 'trig':
            terms = spec['trig']
            width = len(terms[0]) if terms else (len(periods) + 2 if periods else 4)
            dim = width - 2
            torus = Torus(tuple(float(p) for p in (periods or (TWO_PI,) * dim)))
            potential = TrigPotential(torus, terms)
        else:
            grid = spec['grid']
            shape = tuple(int(grid[k]) for k in ('nx', 'ny') if k in grid)
            path = Path(grid['file'])
            if base_directory and not path.is_absolute():
                path = Path(base_directory) / path
            torus = Torus(tuple(float(p) for p in (periods or (TWO_PI,) * len(shape))))
            potential = GridPotential(torus, load_grid_samples(str(path), shape), source=str(path))

        if tilt is None:
            tilt = [0.0] * torus.dim
        if len(tilt) != torus.dim:
            raise ConfigurationError("Tilt length must match the torus dimension",
                                     tilt=list(tilt), dim=torus.dim)

        normalized = {kind: spec[kind], 'tilt': [float(t) for t in tilt],
                      'periods': list(torus.periods)}
        return cls(potential, tilt, spec=normalized, direction=spec.get('direction'))

    @classmethod
    def preset(cls, name: str, c: float = 0.0, direction: Optional[Sequence[float]] = None,
               periods: Optional[Sequence[float]] = None) -> 'TiltedDrift':
        spec: Dict[str, Any] = {'preset': name}
        if periods is not None:
            spec['periods'] = list(periods)
        drift = cls.from_spec(spec)
        if c == 0.0 and direction is None:
            return drift
        beta = direction if direction is not None else drift.tilt_direction()
        return drift.with_tilt(c, beta)


def eval_drift(drift: TiltedDrift, x: np.ndarray) -> np.ndarray:
    return drift.eval_drift(x)


def line_integral(form: ClosedOneForm, path: LiftedPath) -> float:
    return form.line_integral(path)
