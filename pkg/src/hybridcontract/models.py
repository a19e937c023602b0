"""Built-in hybrid systems with closed-form fields, Jacobians, guards and resets.

* ``example1``: two diagonal linear modes split by the line ``x1 = 1``.
* ``planar_pwl``: rotating linear flows on the two half planes, with a reset
  scaling the second coordinate on each crossing of ``x1 = 0``.
* ``traffic``: two-link freeway with capacity drop modeled as hysteresis
  (four modes; densities in vehicles, time in hours).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError
from .hybrid import GuardArc, HybridSystem, Mode
from .norms import NormSpec


def _identity(x):
    return np.array(x, dtype=float)


def _eye2(x):
    return np.eye(2)


def _check_positive(params, names):
    for name in names:
        v = getattr(params, name)
        if not (np.isfinite(v) and v > 0):
            raise ConfigError(f"{name} must be strictly positive, got {v!r}")


class _Params:
    @classmethod
    def from_dict(cls, d: dict | None):
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Example 1


@dataclass(frozen=True)
class Example1Params(_Params):
    a_L: float = 1.0
    b_L: float = 1.0
    a_R: float = 2.0
    b_R: float = 1.0

    def __post_init__(self):
        _check_positive(self, ("a_L", "b_L", "a_R", "b_R"))


def _orthant(x):
    return bool(x[0] >= 0 and x[1] >= 0)


def build_example1(p: Example1Params | None = None) -> HybridSystem:
    """Modes ``L`` and ``R`` with ``dx/dt = diag(-a, -b) x`` and identity resets."""
    p = p or Example1Params()
    A_L = np.diag([-p.a_L, -p.b_L])
    A_R = np.diag([-p.a_R, -p.b_R])
    box = ([0.0, 0.0], [3.0, 3.0])
    L = Mode("L", 2, lambda t, x, A=A_L: A @ x, NormSpec(2),
             jacobian=lambda t, x, A=A_L: A, domain=_orthant, box=box)
    R = Mode("R", 2, lambda t, x, A=A_R: A @ x, NormSpec(2),
             jacobian=lambda t, x, A=A_R: A, domain=_orthant, box=box)
    line = dict(
        chart=lambda s: np.array([1.0, s[0]]),
        chart_inverse=lambda x: np.array([x[1]]),
        chart_bounds=([0.0], [np.inf]),
        reset=_identity, reset_jacobian=_eye2,
    )
    arcs = [
        GuardArc(1, 0, guard=lambda x: x[0] - 1.0,
                 guard_gradient=lambda x: np.array([1.0, 0.0]), **line),
        GuardArc(0, 1, guard=lambda x: 1.0 - x[0],
                 guard_gradient=lambda x: np.array([-1.0, 0.0]), **line),
    ]
    return HybridSystem((L, R), arcs, name="example1",
                        metadata={"params": p.to_dict()})


# ---------------------------------------------------------------------------
# planar piecewise-linear system


@dataclass(frozen=True)
class PlanarPwlParams(_Params):
    alpha_plus: float = -0.1
    alpha_minus: float = -0.2
    beta_plus: float = 1.0
    beta_minus: float = 1.5
    c_plus: float = 1.0
    c_minus: float = 1.0

    def __post_init__(self):
        _check_positive(self, ("beta_plus", "beta_minus", "c_plus", "c_minus"))

    def matrix(self, sign: int) -> np.ndarray:
        a, b = ((self.alpha_plus, self.beta_plus) if sign > 0
                else (self.alpha_minus, self.beta_minus))
        return np.array([[a, -b], [b, a]])


def pwl_saltation_reference(p: PlanarPwlParams, sign: int) -> np.ndarray:
    """Reference closed form ``[[b_other/b, 0], [(a c - a_other)/b, c]]``.

    It leaves the post-reset field unscaled by the reset, so it agrees with
    :func:`pwl_saltation_exact` only when ``c = 1``.
    """
    if sign > 0:
        a, b, c, a2, b2 = p.alpha_plus, p.beta_plus, p.c_plus, p.alpha_minus, p.beta_minus
    else:
        a, b, c, a2, b2 = p.alpha_minus, p.beta_minus, p.c_minus, p.alpha_plus, p.beta_plus
    return np.array([[b2 / b, 0.0], [(a * c - a2) / b, c]])


def pwl_saltation_exact(p: PlanarPwlParams, sign: int) -> np.ndarray:
    """Saltation matrix with the post-reset field evaluated at the reset image:
    ``c * [[b_other/b, 0], [(a - a_other)/b, 1]]``."""
    if sign > 0:
        a, b, c, a2, b2 = p.alpha_plus, p.beta_plus, p.c_plus, p.alpha_minus, p.beta_minus
    else:
        a, b, c, a2, b2 = p.alpha_minus, p.beta_minus, p.c_minus, p.alpha_plus, p.beta_plus
    return c * np.array([[b2 / b, 0.0], [(a - a2) / b, 1.0]])


def build_planar_pwl(p: PlanarPwlParams | None = None) -> HybridSystem:
    """Modes ``plus`` (x1 >= 0) and ``minus`` (x1 <= 0).

    The guard of ``plus`` is ``g = x1`` and that of ``minus`` is ``g = -x1``;
    only the half of each line with ``+-x2 > 0`` is reached, which is where
    the field is transversal.
    """
    p = p or PlanarPwlParams()
    A_p, A_m = p.matrix(+1), p.matrix(-1)
    box = 2.0
    plus = Mode("plus", 2, lambda t, x, A=A_p: A @ x, NormSpec(2),
                jacobian=lambda t, x, A=A_p: A, domain=lambda x: bool(x[0] >= 0),
                box=([0.0, -box], [box, box]))
    minus = Mode("minus", 2, lambda t, x, A=A_m: A @ x, NormSpec(2),
                 jacobian=lambda t, x, A=A_m: A, domain=lambda x: bool(x[0] <= 0),
                 box=([-box, -box], [0.0, box]))
    Sp, Sm = np.diag([1.0, p.c_plus]), np.diag([1.0, p.c_minus])
    chart = dict(chart=lambda s: np.array([0.0, s[0]]),
                 chart_inverse=lambda x: np.array([x[1]]))
    arcs = [
        GuardArc(0, 1, guard=lambda x: x[0],
                 guard_gradient=lambda x: np.array([1.0, 0.0]),
                 reset=lambda x, S=Sp: S @ x, reset_jacobian=lambda x, S=Sp: S,
                 chart_bounds=([0.0], [np.inf]), **chart),
        GuardArc(1, 0, guard=lambda x: -x[0],
                 guard_gradient=lambda x: np.array([-1.0, 0.0]),
                 reset=lambda x, S=Sm: S @ x, reset_jacobian=lambda x, S=Sm: S,
                 chart_bounds=([-np.inf], [0.0]), **chart),
    ]
    return HybridSystem((plus, minus), arcs, name="planar_pwl",
                        metadata={"params": p.to_dict()})


# ---------------------------------------------------------------------------
# two-link traffic network with capacity drop


@dataclass(frozen=True)
class TrafficParams(_Params):
    cap1: float = 2400.0
    scale1: float = 33.0
    cap2: float = 1900.0
    scale2: float = 33.0
    supply_slope: float = 20.0
    x_jam: float = 160.0
    x2_upper: float = 60.0
    x2_lower: float = 55.0
    u_mean: float = 1500.0
    u_amp: float = 800.0
    u_period: float = 1.0

    def __post_init__(self):
        _check_positive(self, ("cap1", "scale1", "cap2", "scale2", "supply_slope",
                               "x_jam", "u_period"))
        if not 0 <= self.x2_lower < self.x2_upper:
            raise ConfigError("need 0 <= x2_lower < x2_upper")
        if not self.x2_upper < self.x_crit():
            raise ConfigError(
                f"x2_upper={self.x2_upper} must be below the critical density "
                f"{self.x_crit():.4g}")

    def demand1(self, x):
        return self.cap1 * (1.0 - np.exp(-x / self.scale1))

    def ddemand1(self, x):
        return self.cap1 / self.scale1 * np.exp(-x / self.scale1)

    def demand2(self, x):
        return self.cap2 * (1.0 - np.exp(-x / self.scale2))

    def ddemand2(self, x):
        return self.cap2 / self.scale2 * np.exp(-x / self.scale2)

    def supply2(self, x):
        return self.supply_slope * (self.x_jam - x)

    def dsupply2(self, x):
        return -self.supply_slope

    def u(self, t):
        return self.u_mean + self.u_amp * np.cos(2 * np.pi * t / self.u_period)

    def x_crit(self) -> float:
        return brentq(lambda x: self.demand2(x) - self.supply2(x), 0.0, self.x_jam)

    def rho(self, x1):
        """Off-diagonal entry of the capacity-drop saltation matrix."""
        xb = self.x2_upper
        d1 = self.demand1(x1)
        return (d1 - self.supply2(xb)) / (d1 - self.demand2(xb))

    def supply_boundary_x2(self, x1):
        """``x2`` on the curve ``demand1(x1) = supply2(x2)``."""
        return self.x_jam - self.demand1(x1) / self.supply_slope


TRAFFIC_MODES = ("SC", "SbarC", "SCbar", "SbarCbar")
# accepted spellings of the mode names
TRAFFIC_ALIASES = {
    "S̄C": "SbarC", "SC̄": "SCbar", "S̄C̄": "SbarCbar",
    "sc": "SC", "sbarc": "SbarC", "scbar": "SCbar", "sbarcbar": "SbarCbar",
}


def traffic_uncongested(p: TrafficParams) -> Callable:
    def F(t, x):
        d1 = p.demand1(x[0])
        return np.array([p.u(t) - d1, d1 - p.demand2(x[1])])
    return F


def traffic_congested(p: TrafficParams) -> Callable:
    def F(t, x):
        s2 = p.supply2(x[1])
        return np.array([p.u(t) - s2, s2 - p.demand2(x[1])])
    return F


def traffic_jacobian_uncongested(p: TrafficParams) -> Callable:
    def J(t, x):
        a = p.ddemand1(x[0])
        return np.array([[-a, 0.0], [a, -p.ddemand2(x[1])]])
    return J


def traffic_jacobian_congested(p: TrafficParams) -> Callable:
    def J(t, x):
        ds = p.dsupply2(x[1])
        return np.array([[0.0, -ds], [0.0, ds - p.ddemand2(x[1])]])
    return J


def build_traffic(p: TrafficParams | None = None) -> HybridSystem:
    """Four modes ``SC, SbarC, SCbar, SbarCbar`` with seven guard arcs.

    ``S`` / ``Sbar``: downstream supply is / is not sufficient
    (``demand1(x1) <= supply2(x2)`` / ``>=``). ``C`` / ``Cbar``: the
    hysteresis state allows / forbids congestion. Only ``SbarC`` uses the
    congested field. All resets are the identity.
    """
    p = p or TrafficParams()
    SC, SbarC, SCbar, SbarCbar = range(4)
    tol = 1e-9

    def in_X(x):
        return x[0] >= -tol and -tol <= x[1] <= p.x_jam + tol

    def supply_ok(x):
        return p.demand1(x[0]) <= p.supply2(x[1]) + tol * 1e3

    def supply_short(x):
        return p.demand1(x[0]) >= p.supply2(x[1]) - tol * 1e3

    domains = {
        SC: lambda x: bool(in_X(x) and supply_ok(x) and x[1] >= p.x2_lower - tol),
        SbarC: lambda x: bool(in_X(x) and supply_short(x) and x[1] >= p.x2_lower - tol),
        SCbar: lambda x: bool(in_X(x) and supply_ok(x) and x[1] <= p.x2_upper + tol),
        SbarCbar: lambda x: bool(in_X(x) and supply_short(x) and x[1] <= p.x2_upper + tol),
    }
    Fu, Fc = traffic_uncongested(p), traffic_congested(p)
    Ju, Jc = traffic_jacobian_uncongested(p), traffic_jacobian_congested(p)
    box = ([0.0, 0.0], [200.0, p.x_jam])
    modes = tuple(
        Mode(name, 2, Fc if i == SbarC else Fu, NormSpec(1),
             jacobian=Jc if i == SbarC else Ju, domain=domains[i], box=box,
             time_varying=True, jacobian_time_varying=False)
        for i, name in enumerate(TRAFFIC_MODES)
    )

    def g_supply(x):  # S -> Sbar
        return p.supply2(x[1]) - p.demand1(x[0])

    def dg_supply(x):
        return np.array([-p.ddemand1(x[0]), p.dsupply2(x[1])])

    def g_supply_back(x):  # Sbar -> S
        return -g_supply(x)

    def dg_supply_back(x):
        return -dg_supply(x)

    curve = dict(
        chart=lambda s: np.array([s[0], p.supply_boundary_x2(s[0])]),
        chart_inverse=lambda x: np.array([x[0]]),
    )
    x1_at_lower = -p.scale1 * np.log(1 - p.supply2(p.x2_lower) / p.cap1) \
        if p.supply2(p.x2_lower) < p.cap1 else np.inf
    x1_at_upper = -p.scale1 * np.log(1 - p.supply2(p.x2_upper) / p.cap1) \
        if p.supply2(p.x2_upper) < p.cap1 else np.inf
    # the curve part with x2 >= x2_lower (C modes) or x2 <= x2_upper (Cbar modes)
    curve_C = dict(curve, chart_bounds=([0.0], [x1_at_lower]))
    curve_Cbar = dict(curve, chart_bounds=([x1_at_upper], [np.inf]))

    def hline(level):
        return dict(chart=lambda s: np.array([s[0], level]),
                    chart_inverse=lambda x: np.array([x[0]]))

    ident = dict(reset=_identity, reset_jacobian=_eye2)
    arcs = [
        GuardArc(SC, SbarC, g_supply, guard_gradient=dg_supply, **ident, **curve_C),
        GuardArc(SCbar, SbarCbar, g_supply, guard_gradient=dg_supply, **ident,
                 **curve_Cbar),
        GuardArc(SbarC, SC, g_supply_back, guard_gradient=dg_supply_back, **ident,
                 **curve_C),
        GuardArc(SbarCbar, SCbar, g_supply_back, guard_gradient=dg_supply_back,
                 **ident, **curve_Cbar),
        GuardArc(SCbar, SC, lambda x: p.x2_upper - x[1],
                 guard_gradient=lambda x: np.array([0.0, -1.0]), **ident,
                 **hline(p.x2_upper), chart_bounds=([0.0], [x1_at_upper])),
        GuardArc(SbarCbar, SbarC, lambda x: p.x2_upper - x[1],
                 guard_gradient=lambda x: np.array([0.0, -1.0]), **ident,
                 **hline(p.x2_upper), chart_bounds=([x1_at_upper], [np.inf])),
        GuardArc(SC, SCbar, lambda x: x[1] - p.x2_lower,
                 guard_gradient=lambda x: np.array([0.0, 1.0]), **ident,
                 **hline(p.x2_lower), chart_bounds=([0.0], [x1_at_lower])),
    ]
    return HybridSystem(modes, arcs, name="traffic", horizon=p.u_period,
                        metadata={"params": p.to_dict(),
                                  "units": {"state": "vehicles", "time": "hours",
                                            "flow": "vehicles/hour"}})


# ---------------------------------------------------------------------------
# one-mode linear system


@dataclass(frozen=True)
class LinearParams(_Params):
    """``dx/dt = diag(-a, -b) x`` on the plane, no guards."""

    a: float = 1.0
    b: float = 2.0


def build_linear(p: LinearParams | None = None) -> HybridSystem:
    p = p or LinearParams()
    A = np.diag([-p.a, -p.b])
    mode = Mode("X", 2, lambda t, x: A @ x, NormSpec(2), jacobian=lambda t, x: A,
                box=([-3.0, -3.0], [3.0, 3.0]))
    return HybridSystem((mode,), (), name="linear", metadata={"params": p.to_dict()})


# ---------------------------------------------------------------------------
# registry used by the CLI

MODELS = {
    "example1": (Example1Params, build_example1),
    "planar_pwl": (PlanarPwlParams, build_planar_pwl),
    "traffic": (TrafficParams, build_traffic),
    "linear": (LinearParams, build_linear),
}

# initial state used when a run configuration gives none
DEFAULT_INITIAL = {
    "example1": ("R", (2.0, 1.0)),
    "planar_pwl": ("plus", (1.0, 1.0)),
    "traffic": ("SCbar", (20.0, 20.0)),
    "linear": ("X", (1.0, 1.0)),
}


def build_model(name: str, params: dict | None = None) -> HybridSystem:
    try:
        cls, builder = MODELS[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    try:
        p = cls.from_dict(params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return builder(p)


def resolve_mode_name(sys: HybridSystem, name: str) -> int:
    if sys.name == "traffic":
        name = TRAFFIC_ALIASES.get(name, TRAFFIC_ALIASES.get(name.lower(), name))
    return sys.mode_index(name)
