"""Model problem definitions.

The state equation lives on the space-time cylinder Q = (x_min, x_max) x
(0, t_final).  A diffusion coefficient kappa takes the value kappa1 between
two interface curves x = offset_a + s(t) and x = offset_b + s(t) and kappa2
outside them, where s(t) is the time integral of a transport velocity v(t).
The control problem drives the state toward a desired field u_d under an
energy regularization weighted by eta.

Everything here is plain data plus vectorized numpy callables; meshing and
assembly consume these definitions but never reach back into them.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import GeometryError

__all__ = [
    "Velocity",
    "velocity_zero",
    "velocity_sine",
    "velocity_tabulated",
    "FieldBranch",
    "PiecewiseField",
    "ProblemSpec",
    "displacement",
    "classify_point",
    "example1_static",
    "example1_moving",
    "derive_desired_state",
    "desired_state_function",
]

ON_INTERFACE = 0


@dataclasses.dataclass(frozen=True)
class Velocity:
    """Interface transport speed v(t).

    ``antiderivative`` is an exact primitive of ``fn`` when one is known;
    displacement falls back to adaptive quadrature (abs tol 1e-12) otherwise.
    Both callables must accept numpy arrays.
    """

    fn: Callable
    antiderivative: Optional[Callable] = None
    name: str = "custom"


def velocity_zero() -> Velocity:
    return Velocity(
        fn=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        antiderivative=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        name="zero",
    )


def velocity_sine(amplitude: float = 0.1 * math.pi, frequency: float = 1.0) -> Velocity:
    """v(t) = amplitude * sin(2*pi*frequency*t), with exact primitive."""
    w = 2.0 * math.pi * frequency
    return Velocity(
        fn=lambda t: amplitude * np.sin(w * np.asarray(t, dtype=float)),
        antiderivative=lambda t: -(amplitude / w) * np.cos(w * np.asarray(t, dtype=float)),
        name="sine",
    )


def velocity_tabulated(times, values) -> Velocity:
    """Cubic-spline interpolant of sampled speeds; displacement integrates
    the spline exactly via its polynomial antiderivative."""
    spline = CubicSpline(np.asarray(times, dtype=float), np.asarray(values, dtype=float))
    return Velocity(fn=spline, antiderivative=spline.antiderivative(), name="tabulated")


def _displacement_fn(velocity: Velocity) -> Callable:
    """s(t) = integral of v from 0 to t as a vectorized callable."""
    if velocity.antiderivative is not None:
        prim = velocity.antiderivative
        base = float(np.asarray(prim(0.0)))

        def s_exact(t):
            return np.asarray(prim(np.asarray(t, dtype=float)), dtype=float) - base

        return s_exact

    def s_quad(t):
        tt = np.asarray(t, dtype=float)
        flat = np.ravel(tt)
        out = np.empty(flat.shape)
        for i, ti in enumerate(flat):
            out[i] = integrate.quad(velocity.fn, 0.0, ti, epsabs=1e-12, limit=200)[0]
        return out.reshape(tt.shape)

    return s_quad


@dataclasses.dataclass(frozen=True)
class FieldBranch:
    """One smooth branch of a piecewise field with the partials the solver
    and metrics need.  All callables are vectorized over (x, t) arrays."""

    value: Callable
    dx: Optional[Callable] = None
    dt: Optional[Callable] = None
    dxx: Optional[Callable] = None


@dataclasses.dataclass(frozen=True)
class PiecewiseField:
    """Field defined by one branch inside the interface band (region 1) and
    one outside (region 2).  Branches of continuous fields agree on the
    interface; interface points take the branch-shared value via branch 1."""

    branch1: FieldBranch
    branch2: FieldBranch

    def evaluate(self, spec: "ProblemSpec", x, t, deriv: str = "value"):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        region = classify_point(spec, x, t)
        f1 = getattr(self.branch1, deriv)
        f2 = getattr(self.branch2, deriv)
        if f1 is None or f2 is None:
            raise ValueError(f"field branches do not provide derivative {deriv!r}")
        return np.where(region != 2, f1(x, t), f2(x, t))


@dataclasses.dataclass(frozen=True)
class ProblemSpec:
    """Full description of one control problem instance.

    ``desired_state`` is either a vectorized callable (x, t) -> value or
    None, in which case it is derived from the exact state/adjoint pair.
    Exact fields are optional; metrics that need them raise otherwise.
    """

    x_min: float
    x_max: float
    t_final: float
    kappa1: float
    kappa2: float
    eta: float
    velocity: Velocity
    offset_a: float
    offset_b: float
    desired_state: Optional[Callable] = None
    exact_state: Optional[PiecewiseField] = None
    exact_adjoint: Optional[PiecewiseField] = None
    name: str = "custom"

    def __post_init__(self):
        if not (self.x_min < self.x_max):
            raise GeometryError("domain requires x_min < x_max")
        if self.t_final <= 0.0:
            raise GeometryError("t_final must be positive")
        if self.kappa1 <= 0.0 or self.kappa2 <= 0.0:
            raise GeometryError("diffusion coefficients must be positive")
        if self.eta <= 0.0:
            raise GeometryError("regularization weight eta must be positive")
        if not (self.offset_a < self.offset_b):
            raise GeometryError("interface offsets require offset_a < offset_b")
        # Strict interiority of both curves over the whole time horizon,
        # sampled densely; the mesher re-checks exactly on its time lines.
        ts = np.linspace(0.0, self.t_final, 2001)
        s = _displacement_fn(self.velocity)(ts)
        lo = self.offset_a + s
        hi = self.offset_b + s
        if not (np.all(lo > self.x_min) and np.all(hi < self.x_max)):
            raise GeometryError("interface must stay strictly inside the domain for all t")

    def kappa_of_region(self, region):
        """kappa on region labels (interface points take the region-1 value)."""
        return np.where(np.asarray(region) != 2, self.kappa1, self.kappa2)


def displacement(spec: ProblemSpec, t):
    """Interface displacement s(t); raises for t outside [0, t_final]."""
    tt = np.asarray(t, dtype=float)
    slack = 1e-12 * max(spec.t_final, 1.0)
    if np.any(tt < -slack) or np.any(tt > spec.t_final + slack):
        raise ValueError(f"time {t!r} outside [0, {spec.t_final}]")
    tt = np.clip(tt, 0.0, spec.t_final)
    out = _displacement_fn(spec.velocity)(tt)
    return float(out) if np.ndim(t) == 0 else out


def classify_point(spec: ProblemSpec, x, t):
    """Region of (x, t) relative to the exact interface: 1 between the
    curves, 2 outside, ON_INTERFACE (0) within 1e-14*width of either curve."""
    x = np.asarray(x, dtype=float)
    s = displacement(spec, t)
    xa = spec.offset_a + s
    xb = spec.offset_b + s
    tol = 1e-14 * (spec.x_max - spec.x_min)
    region = np.where((x > xa) & (x < xb), 1, 2)
    on_curve = (np.abs(x - xa) <= tol) | (np.abs(x - xb) <= tol)
    region = np.where(on_curve, ON_INTERFACE, region)
    return region if region.shape else int(region)


# Manufactured solution pair shared by the two bundled presets.  Both
# branches of the state agree (value 1/2) on both interface curves, so the
# pair is continuous across the interface.

_PHASE1 = 47.0 * math.pi / 6.0
_PHASE2 = 23.0 * math.pi / 6.0
_K1 = 20.0 * math.pi
_K2 = 10.0 * math.pi
_KS = 10.0 * math.pi


def _example1_w(k, phase, velocity):
    """w(x,t) = sin(k (x - s(t)) - phase) + sin(10 pi s(t) + 23 pi/6) and its
    partials, as vectorized closures."""
    s_of = _displacement_fn(velocity)
    v_of = velocity.fn

    def parts(x, t):
        s = s_of(t)
        return k * (x - s) - phase, _KS * s + _PHASE2, s

    def w(x, t):
        g, gs, _ = parts(x, t)
        return np.sin(g) + np.sin(gs)

    def w_dx(x, t):
        g, _, _ = parts(x, t)
        return k * np.cos(g)

    def w_dxx(x, t):
        g, _, _ = parts(x, t)
        return -(k * k) * np.sin(g)

    def w_dt(x, t):
        g, gs, _ = parts(x, t)
        v = v_of(np.asarray(t, dtype=float))
        return -k * v * np.cos(g) + _KS * v * np.cos(gs)

    return w, w_dx, w_dt, w_dxx


def _example1_state_branch(k, phase, velocity) -> FieldBranch:
    w, w_dx, w_dt, w_dxx = _example1_w(k, phase, velocity)
    half_pi = 0.5 * math.pi

    def ramp(t):
        return np.sin(half_pi * np.asarray(t, dtype=float))

    def dramp(t):
        return half_pi * np.cos(half_pi * np.asarray(t, dtype=float))

    return FieldBranch(
        value=lambda x, t: w(x, t) * ramp(t),
        dx=lambda x, t: w_dx(x, t) * ramp(t),
        dt=lambda x, t: w_dt(x, t) * ramp(t) + w(x, t) * dramp(t),
        dxx=lambda x, t: w_dxx(x, t) * ramp(t),
    )


def _example1_adjoint_branch(k, phase, velocity, eta) -> FieldBranch:
    w, w_dx, w_dt, w_dxx = _example1_w(k, phase, velocity)
    half_pi = 0.5 * math.pi

    def fade(t):
        return np.sin(half_pi * (1.0 - np.asarray(t, dtype=float)))

    def dfade(t):
        return -half_pi * np.cos(half_pi * (1.0 - np.asarray(t, dtype=float)))

    return FieldBranch(
        value=lambda x, t: -eta * w(x, t) * fade(t),
        dx=lambda x, t: -eta * w_dx(x, t) * fade(t),
        dt=lambda x, t: -eta * (w_dt(x, t) * fade(t) + w(x, t) * dfade(t)),
        dxx=lambda x, t: -eta * w_dxx(x, t) * fade(t),
    )


def _example1(velocity: Velocity, name: str) -> ProblemSpec:
    eta = 1e-6
    state = PiecewiseField(
        branch1=_example1_state_branch(_K1, _PHASE1, velocity),
        branch2=_example1_state_branch(_K2, _PHASE2, velocity),
    )
    adjoint = PiecewiseField(
        branch1=_example1_adjoint_branch(_K1, _PHASE1, velocity, eta),
        branch2=_example1_adjoint_branch(_K2, _PHASE2, velocity, eta),
    )
    return ProblemSpec(
        x_min=0.0,
        x_max=1.0,
        t_final=1.0,
        kappa1=0.5,
        kappa2=1.0,
        eta=eta,
        velocity=velocity,
        offset_a=0.4,
        offset_b=0.6,
        desired_state=None,
        exact_state=state,
        exact_adjoint=adjoint,
        name=name,
    )


def example1_static() -> ProblemSpec:
    """Oscillatory manufactured pair, interface at rest."""
    return _example1(velocity_zero(), "example1-static")


def example1_moving() -> ProblemSpec:
    """Same pair transported by v(t) = 0.1 pi sin(2 pi t)."""
    return _example1(velocity_sine(), "example1-moving")


def derive_desired_state(spec: ProblemSpec) -> Callable:
    """u_d from the exact pair through the strong adjoint equation:

        u_d = u + dt p + v(t) dx p + kappa_i dxx p,

    evaluated with the true-subdomain branch and kappa at each point."""
    if spec.exact_state is None or spec.exact_adjoint is None:
        raise ValueError("deriving u_d requires exact state and adjoint fields")
    state = spec.exact_state
    adjoint = spec.exact_adjoint
    for branch in (adjoint.branch1, adjoint.branch2):
        if branch.dx is None or branch.dt is None or branch.dxx is None:
            raise ValueError("adjoint branches must provide dx, dt and dxx")

    def u_d(x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        in1 = np.asarray(classify_point(spec, x, t)) != 2
        kap = np.where(in1, spec.kappa1, spec.kappa2)
        v = spec.velocity.fn(t)

        def pick(deriv, field):
            return np.where(
                in1,
                getattr(field.branch1, deriv)(x, t),
                getattr(field.branch2, deriv)(x, t),
            )

        return (
            pick("value", state)
            + pick("dt", adjoint)
            + v * pick("dx", adjoint)
            + kap * pick("dxx", adjoint)
        )

    return u_d


def desired_state_function(spec: ProblemSpec) -> Callable:
    """The u_d the solver consumes: explicit closure if given, else derived."""
    if spec.desired_state is not None:
        return spec.desired_state
    return derive_desired_state(spec)
