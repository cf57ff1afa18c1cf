"""Periodic potentials with a single nondegenerate well per cell.

Provides the potential families used throughout the package, locates and
validates the well, and computes the tunneling action between adjacent
wells (the integral of sqrt(V) over one period).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import PotentialError, QuadratureError

_SCAN_POINTS = 1024
_CURVATURE_TOL = 1e-8
_PERIODICITY_RTOL = 1e-12
_QUAD_ABS_TOL = 1e-10


@dataclass(frozen=True)
class PotentialSpec:
    """A periodic potential normalized so that min V = 0.

    Attributes:
        a: lattice period.
        v, dv, d2v: callables for V and its first two derivatives, all
            vectorized over numpy arrays.
        x0: location of the well minimum inside [-a/2, a/2).
        curvature: V''(x0), strictly positive except in free test mode.
        depth: amplitude scale max V - min V.
        family: family tag ("sin2", "cos-series", "custom-samples", "free").
    """

    a: float
    v: Callable[[np.ndarray], np.ndarray]
    dv: Callable[[np.ndarray], np.ndarray]
    d2v: Callable[[np.ndarray], np.ndarray]
    x0: float
    curvature: float
    depth: float
    family: str = "custom-samples"

    def minimum(self, j: int = 0) -> float:
        """Location of the j-th well, x0 + j*a."""
        return self.x0 + j * self.a


@dataclass(frozen=True)
class AgmonData:
    """Tunneling action and tabulated well-to-point action distances.

    s0 is the action between adjacent wells; d[i] tabulates the action
    distance from x0 to x[i].
    """

    s0: float
    x: np.ndarray
    d: np.ndarray
    a: float
    x0: float


def _raw_family(family: str, params: dict):
    """Return (v, dv, d2v, a, depth_hint) for a family before normalization."""
    if family == "sin2":
        v0 = float(params["v0"])
        a = float(params["a"])
        w = math.pi / a

        def v(x):
            return v0 * np.sin(w * np.asarray(x)) ** 2

        def dv(x):
            return v0 * w * np.sin(2 * w * np.asarray(x))

        def d2v(x):
            return 2 * v0 * w**2 * np.cos(2 * w * np.asarray(x))

        return v, dv, d2v, a, v0

    if family in ("cos-series", "cos_series"):
        a = float(params["a"])
        coeffs = np.asarray(params["coeffs"], dtype=float)
        if coeffs.ndim != 1 or coeffs.size == 0:
            raise PotentialError("cos-series requires a nonempty coefficient list")
        ks = 2 * math.pi * np.arange(1, coeffs.size + 1) / a

        def v(x):
            x = np.asarray(x, dtype=float)
            acc = np.zeros_like(x, dtype=float)
            for c, k in zip(coeffs, ks):
                acc = acc + c * (1.0 - np.cos(k * x))
            return acc

        def dv(x):
            x = np.asarray(x, dtype=float)
            acc = np.zeros_like(x, dtype=float)
            for c, k in zip(coeffs, ks):
                acc = acc + c * k * np.sin(k * x)
            return acc

        def d2v(x):
            x = np.asarray(x, dtype=float)
            acc = np.zeros_like(x, dtype=float)
            for c, k in zip(coeffs, ks):
                acc = acc + c * k**2 * np.cos(k * x)
            return acc

        return v, dv, d2v, a, float(np.sum(np.abs(coeffs)) * 2)

    if family in ("custom-samples", "custom_samples", "custom"):
        a = float(params["a"])
        samples = np.asarray(params["samples"], dtype=float)
        if samples.ndim != 1 or samples.size < 8:
            raise PotentialError("custom-samples requires >= 8 samples over one period")
        # periodic C2 spline on [0, a]; sample grid excludes the endpoint
        xs = np.linspace(0.0, a, samples.size + 1)
        ys = np.concatenate([samples, samples[:1]])
        cs = CubicSpline(xs, ys, bc_type="periodic")
        d1 = cs.derivative(1)
        d2 = cs.derivative(2)

        def v(x):
            return cs(np.mod(np.asarray(x, dtype=float), a))

        def dv(x):
            return d1(np.mod(np.asarray(x, dtype=float), a))

        def d2v(x):
            return d2(np.mod(np.asarray(x, dtype=float), a))

        return v, dv, d2v, a, float(samples.max() - samples.min())

    raise PotentialError(f"unknown potential family {family!r}")


def make_potential(family: str, **params) -> PotentialSpec:
    """Build and validate a PotentialSpec.

    Args:
        family: one of "sin2" (v0, a), "cos-series" (a, coeffs),
            "custom-samples" (a, samples).
        **params: family parameters, see above.

    Returns:
        PotentialSpec with the minimum normalized to zero and the well
        located by a grid scan refined by Newton iteration on V'.

    Raises:
        PotentialError: period not positive, degenerate well curvature,
            or more than one equally deep well per period.
    """
    raw_v, raw_dv, raw_d2v, a, depth_hint = _raw_family(family, params)
    if a <= 0:
        raise PotentialError(f"period must be positive, got {a}")

    xs = -a / 2 + a * np.arange(_SCAN_POINTS) / _SCAN_POINTS
    vals = np.asarray(raw_v(xs), dtype=float)
    _check_periodicity(raw_v, xs, vals)

    scale = float(vals.max() - vals.min())
    if scale <= _CURVATURE_TOL * max(1.0, abs(float(vals.max()))):
        raise PotentialError("potential is flat: degenerate minimum")

    x0 = _refine_minimum(raw_dv, raw_d2v, float(xs[np.argmin(vals)]), a)
    x0 = (x0 + a / 2) % a - a / 2
    curv = float(raw_d2v(x0))
    if curv <= _CURVATURE_TOL:
        raise PotentialError(f"degenerate minimum: V''(x0) = {curv:.3e} <= tol")

    _check_unique_minimum(raw_v, raw_dv, raw_d2v, xs, vals, x0, a, scale)

    vmin = float(raw_v(x0))

    def v(x):
        return raw_v(x) - vmin

    spec = PotentialSpec(
        a=a, v=v, dv=raw_dv, d2v=raw_d2v, x0=x0,
        curvature=curv, depth=float(depth_hint), family=family,
    )
    return spec


def free_potential(a: float) -> PotentialSpec:
    """Test-only spec with V = 0, bypassing the degenerate-well rejection."""
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    return PotentialSpec(a=float(a), v=zero, dv=zero, d2v=zero,
                         x0=0.0, curvature=0.0, depth=0.0, family="free")


def _check_periodicity(v, xs, vals):
    a = (xs[1] - xs[0]) * len(xs)
    shifted = np.asarray(v(xs + a), dtype=float)
    ref = max(1.0, float(np.abs(vals).max()))
    err = float(np.abs(shifted - vals).max())
    if err > _PERIODICITY_RTOL * ref:
        raise PotentialError(f"potential not periodic: relative error {err / ref:.3e}")


def _refine_minimum(dv, d2v, x_start, a, max_iter=60):
    x = x_start
    for _ in range(max_iter):
        g = float(dv(x))
        h = float(d2v(x))
        if h <= 0:
            break
        step = g / h
        x -= step
        if abs(step) < 1e-15 * max(1.0, abs(x)):
            break
    return x


def _check_unique_minimum(v, dv, d2v, xs, vals, x0, a, scale):
    interior = np.arange(len(xs))
    left = np.roll(vals, 1)
    right = np.roll(vals, -1)
    is_local_min = (vals <= left) & (vals <= right)
    candidates = xs[is_local_min[interior]]
    minima = []
    for c in candidates:
        xr = _refine_minimum(dv, d2v, float(c), a)
        xr = (xr + a / 2) % a - a / 2
        if not any(abs(xr - m) < 1e-6 * a or abs(abs(xr - m) - a) < 1e-6 * a for m in minima):
            minima.append(xr)
    vmin = float(v(x0))
    equal_depth = [m for m in minima if float(v(m)) - vmin < 1e-8 * scale]
    if len(equal_depth) > 1:
        raise PotentialError(
            f"{len(equal_depth)} equally deep minima per period; a single well is required"
        )


def _sqrt_v(spec: PotentialSpec):
    def f(s):
        return math.sqrt(max(float(spec.v(s)), 0.0))
    return f


def agmon_distance(spec: PotentialSpec, x: float, y: float) -> float:
    """Action distance |integral of sqrt(V) from x to y|.

    Integrates piecewise between well locations so the sqrt-type kinks at
    the minima sit on panel boundaries; each panel uses adaptive
    quadrature with absolute tolerance 1e-10.

    Raises:
        QuadratureError: if the summed error estimate exceeds 100x the
            requested tolerance; the achieved tolerance is attached.
    """
    lo, hi = (x, y) if x <= y else (y, x)
    if hi - lo < 1e-300:
        return 0.0
    a, x0 = spec.a, spec.x0
    k_lo = math.ceil((lo - x0) / a)
    k_hi = math.floor((hi - x0) / a)
    breaks = [lo] + [x0 + k * a for k in range(k_lo, k_hi + 1) if lo < x0 + k * a < hi] + [hi]
    f = _sqrt_v(spec)
    total, err = 0.0, 0.0
    for s1, s2 in zip(breaks[:-1], breaks[1:]):
        val, ae = quad(f, s1, s2, epsabs=_QUAD_ABS_TOL, epsrel=1e-12, limit=200)
        total += val
        err += ae
    if err > 100 * _QUAD_ABS_TOL * max(1.0, len(breaks)):
        raise QuadratureError(
            f"quadrature did not converge: error estimate {err:.3e}", achieved=err
        )
    return total


def tunneling_action(spec: PotentialSpec, grid: np.ndarray | None = None) -> AgmonData:
    """Compute the adjacent-well action s0 and tabulate d(x, x0) on a grid.

    The tabulation uses exact periodicity: the action from x0 to x0 + k*a
    is k*s0, so only the in-cell remainder is integrated per point.
    """
    s0 = agmon_distance(spec, spec.x0, spec.x0 + spec.a)
    if grid is None:
        grid = np.linspace(spec.x0 - 4 * spec.a, spec.x0 + 4 * spec.a, 513)
    grid = np.asarray(grid, dtype=float)
    d = np.empty_like(grid)
    for i, xi in enumerate(grid):
        # nearest well on the x0 side of xi, so the remainder stays in one cell
        k = math.trunc((xi - spec.x0) / spec.a)
        anchor = spec.x0 + k * spec.a
        d[i] = abs(k) * s0 + agmon_distance(spec, anchor, xi)
    return AgmonData(s0=s0, x=grid, d=d, a=spec.a, x0=spec.x0)
