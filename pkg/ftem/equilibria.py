"""
Equilibria of the harvested competition system.

Interior equilibria are the positive roots of the nullcline function

    phi(v) = (a2 b1 q - c2 a1) + (c1 c2 - b1 b2) v - b1 (1 - q) v^(p-1)

paired with u = (a1 - c1 v) / b1. Boundary equilibria on the v axis are the
roots of

    psi(v) = a2 q - b2 v - (1 - q) v^(p-1).

Both functions are singular at v = 0 and piecewise monotone, so roots are
bracketed on each monotone piece and polished with Brent's method.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, ParameterError, ResidualError
from .models import (
    CompetitionParams,
    State2,
    StateLike,
    classical_coexistence,
    jacobian_modified,
    rhs_modified,
)

logger = logging.getLogger(__name__)

ArrayOrFloat = Union[float, np.ndarray]

ROOT_XTOL = 1e-14
# |phi(v_max)| below this is a tangency: the two roots are returned once
TANGENCY_TOL = 1e-10
NONHYPERBOLIC_TOL = 1e-8
RESIDUAL_TOL = 1e-8
# Coordinates below this are treated as lying on an axis
AXIS_TOL = 1e-12


class EquilibriumKind(Enum):
    TRIVIAL_E0 = "trivial_e0"
    BOUNDARY_EU = "boundary_eu"
    BOUNDARY_EV = "boundary_ev"
    INTERIOR = "interior"


class Stability(Enum):
    STABLE_NODE = "stable_node"
    SADDLE = "saddle"
    UNSTABLE = "unstable"
    NONHYPERBOLIC = "nonhyperbolic"
    FINITE_TIME_ATTRACTOR = "finite_time_attractor"


_KIND_ORDER = {
    EquilibriumKind.TRIVIAL_E0: 0,
    EquilibriumKind.BOUNDARY_EU: 1,
    EquilibriumKind.BOUNDARY_EV: 2,
    EquilibriumKind.INTERIOR: 3,
}


@dataclass
class EquilibriumPoint:
    """A classified equilibrium."""
    location: State2
    kind: EquilibriumKind
    stability: Stability
    eigenvalues: Optional[Tuple[complex, complex]] = None
    # Qualitative stability bounds evaluated for reference only
    advisory: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "u": self.location.u,
            "v": self.location.v,
            "kind": self.kind.value,
            "stability": self.stability.value,
            "eigenvalues": None,
        }
        if self.eigenvalues is not None:
            data["eigenvalues"] = [
                {"re": float(lam.real), "im": float(lam.imag)} for lam in self.eigenvalues
            ]
        if self.advisory:
            data["advisory"] = dict(self.advisory)
        return data


@dataclass
class EquilibriumReport:
    """All equilibria for one parameter set, plus the nullcline scalars."""
    params: CompetitionParams
    points: List[EquilibriumPoint]
    v_phi: Optional[float] = None
    v_max: Optional[float] = None
    phi_at_vmax: Optional[float] = None
    interior_count: int = 0
    boundary_v_count: int = 0
    warnings: List[str] = field(default_factory=list)

    def of_kind(self, kind: EquilibriumKind) -> List[EquilibriumPoint]:
        return [pt for pt in self.points if pt.kind == kind]

    @property
    def interior(self) -> List[EquilibriumPoint]:
        return self.of_kind(EquilibriumKind.INTERIOR)

    @property
    def boundary_v(self) -> List[EquilibriumPoint]:
        return self.of_kind(EquilibriumKind.BOUNDARY_EV)

    @property
    def saddles(self) -> List[EquilibriumPoint]:
        return [pt for pt in self.points if pt.stability == Stability.SADDLE]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "v_phi": self.v_phi,
            "v_max": self.v_max,
            "phi_at_vmax": self.phi_at_vmax,
            "interior_count": self.interior_count,
            "boundary_v_count": self.boundary_v_count,
            "points": [pt.to_dict() for pt in self.points],
            "warnings": list(self.warnings),
        }


def _require_positive(v: ArrayOrFloat, name: str = "v") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if np.any(arr <= 0):
        raise DomainError(f"{name} must be positive")
    return arr


def _as_output(arr: np.ndarray) -> ArrayOrFloat:
    return float(arr) if arr.ndim == 0 else arr


def _require_harvested(P: CompetitionParams):
    if not 0 < P.q < 1:
        raise ParameterError(f"Operation requires 0 < q < 1, got q = {P.q}", field="q")
    if not 0 < P.p < 1:
        raise ParameterError(f"Operation requires 0 < p < 1, got p = {P.p}", field="p")


def phi(v: ArrayOrFloat, P: CompetitionParams) -> ArrayOrFloat:
    """Interior nullcline function; accepts scalars or arrays."""
    arr = _require_positive(v)
    out = (
        (P.a2 * P.b1 * P.q - P.c2 * P.a1)
        + (P.c1 * P.c2 - P.b1 * P.b2) * arr
        - P.b1 * (1 - P.q) * arr ** (P.p - 1)
    )
    return _as_output(out)


def phi_prime(v: ArrayOrFloat, P: CompetitionParams) -> ArrayOrFloat:
    arr = _require_positive(v)
    out = (P.c1 * P.c2 - P.b1 * P.b2) + P.b1 * (1 - P.q) * (1 - P.p) * arr ** (P.p - 2)
    return _as_output(out)


def phi_second(v: ArrayOrFloat, P: CompetitionParams) -> ArrayOrFloat:
    arr = _require_positive(v)
    out = P.b1 * (1 - P.q) * (1 - P.p) * (P.p - 2) * arr ** (P.p - 3)
    return _as_output(out)


def psi(v: ArrayOrFloat, P: CompetitionParams) -> ArrayOrFloat:
    """Boundary nullcline function on the v axis."""
    arr = _require_positive(v)
    out = P.a2 * P.q - P.b2 * arr - (1 - P.q) * arr ** (P.p - 1)
    return _as_output(out)


def v_max(P: CompetitionParams) -> float:
    """Unique maximizer of phi.

    v_max^(p-2) = (b1 b2 - c1 c2) / (b1 (1 - q) (1 - p)); the b1 divisor
    follows from phi'(v) = 0.
    """
    gap = P.competition_gap
    if gap <= 0:
        raise ParameterError(f"v_max requires b1*b2 - c1*c2 > 0, got {gap}")
    _require_harvested(P)
    return (gap / (P.b1 * (1 - P.q) * (1 - P.p))) ** (1.0 / (P.p - 2))


def v_phi(P: CompetitionParams) -> float:
    """Unique maximizer of psi: v_phi^(p-2) = b2 / ((1 - q)(1 - p))."""
    _require_harvested(P)
    return (P.b2 / ((1 - P.q) * (1 - P.p))) ** (1.0 / (P.p - 2))


def _lower_bracket(f, v_hi: float) -> float:
    """Shrink toward 0 until f is negative; f -> -inf as v -> 0+."""
    lo = v_hi * 1e-3
    while f(lo) >= 0:
        lo *= 1e-3
        if lo < 1e-300:
            raise DomainError("Could not bracket the root near v = 0")
    return lo


def _upper_bracket(f, v_hi: float, warnings: List[str]) -> float:
    hi = v_hi
    extended = 0
    while f(hi) > 0:
        hi *= 2
        extended += 1
        if extended > 60:
            raise DomainError("Could not bracket the upper root")
    if extended:
        message = f"Upper bracket extended from {v_hi:.6g} to {hi:.6g}"
        logger.warning(message)
        warnings.append(message)
    return hi


def _root(f, lo: float, hi: float) -> float:
    return brentq(f, lo, hi, xtol=ROOT_XTOL, maxiter=500)


def boundary_v_equilibria(P: CompetitionParams, tol: float = TANGENCY_TOL) -> List[float]:
    """Roots of psi on the v axis, ascending (0, 1 or 2 values)."""
    _require_harvested(P)
    vp = v_phi(P)
    peak = P.a2 * P.q - P.b2 * vp * (2 - P.p) / (1 - P.p)

    if abs(peak) <= tol:
        return [vp]
    if peak < 0:
        return []

    f = lambda v: psi(v, P)
    lo = _lower_bracket(f, vp)
    # psi(a2/b2) < 0 whenever q <= 1
    hi = P.a2 / P.b2
    return [_root(f, lo, vp), _root(f, vp, hi)]


def _interior_roots(P: CompetitionParams, warnings: List[str]) -> Tuple[List[float], bool]:
    """Roots of phi on (0, v_ub] before the positivity filter.

    Returns the roots and whether a tangency was detected.
    """
    f = lambda v: phi(v, P)
    v_ub = P.a2 / P.b2

    if P.competition_gap <= 0:
        # phi is strictly increasing; v' < 0 for every v > a2/b2
        top = f(v_ub)
        if top < 0:
            return [], False
        if top == 0:
            return [v_ub], False
        lo = _lower_bracket(f, v_ub)
        return [_root(f, lo, v_ub)], False

    vm = v_max(P)
    peak = f(vm)
    if abs(peak) <= TANGENCY_TOL:
        return [vm], True
    if peak < 0:
        return [], False

    lo = _lower_bracket(f, vm)
    hi = _upper_bracket(f, max(v_ub, 2 * vm), warnings)
    return [_root(f, lo, vm), _root(f, vm, hi)], False


def interior_equilibria(P: CompetitionParams) -> List[State2]:
    """Positive equilibria, ascending in v."""
    _require_harvested(P)
    roots, _ = _interior_roots(P, [])
    points = []
    for v in roots:
        u = (P.a1 - P.c1 * v) / P.b1
        if u > 0 and v > 0:
            points.append(State2(u, v))
    return points


def _eigen_stability(eigenvalues: np.ndarray, scale: float) -> Stability:
    re = np.real(eigenvalues)
    if np.min(np.abs(re)) < NONHYPERBOLIC_TOL * scale:
        return Stability.NONHYPERBOLIC
    if np.all(re < 0):
        return Stability.STABLE_NODE
    if np.all(re > 0):
        return Stability.UNSTABLE
    return Stability.SADDLE


def _ordered_eigenvalues(J: np.ndarray) -> Tuple[complex, complex]:
    eig = np.linalg.eigvals(J)
    eig = sorted(eig, key=lambda lam: (lam.real, lam.imag))
    return complex(eig[0]), complex(eig[1])


def _stable_equilibrium_bounds(P: CompetitionParams, v_star: float) -> Dict[str, Any]:
    """Closed-form q-window for a stable interior point, reported as advisory."""
    gap = P.competition_gap
    denom = P.a2 * P.b1 * (1 - P.p)
    trace_bound = (
        P.a1 + P.a1 * P.c2 * (1 - P.p) + ((P.b2 - P.c1) + gap * (1 - P.p)) * v_star
    ) / denom
    det_bound = (P.a1 * P.c2 * (1 - P.p) + gap * (2 - P.p) / P.b1 * v_star) / denom
    vm = v_max(P)
    existence_bound = (gap * (2 - P.p) * vm + P.c2 * P.a1 * (1 - P.p)) / denom
    upper = min(trace_bound, det_bound)
    return {
        "q_lower": existence_bound,
        "q_upper": upper,
        "predicts_stable": bool(existence_bound < P.q < upper),
    }


def _boundary_v_prediction(P: CompetitionParams, v: float, lower: bool, tangent: bool) -> Stability:
    """Closed-form label for an E_v point: the lower root a saddle, the upper a node past a1/c1.

    Only the v direction backs the lower-root label; when v < a1/c1 the u
    direction is unstable too and the eigenvalues report UNSTABLE.
    """
    if tangent:
        return Stability.NONHYPERBOLIC
    if lower:
        return Stability.SADDLE
    return Stability.STABLE_NODE if v > P.a1 / P.c1 else Stability.SADDLE


def classify(
    point: StateLike,
    P: CompetitionParams,
    residual_tol: float = RESIDUAL_TOL,
    tangent: bool = False,
) -> EquilibriumPoint:
    """Classify an equilibrium location.

    The linearization decides wherever it exists. E_u under harvesting has no
    linearization and is reported as a finite-time attractor.
    """
    u, v = (float(x) for x in point)
    location = State2(u, v)
    residual = float(np.linalg.norm(rhs_modified(location, P)))
    if residual > residual_tol * (1 + np.hypot(u, v)):
        raise ResidualError(f"({u:.6g}, {v:.6g}) is not an equilibrium (residual {residual:.3g})", residual)

    on_u_axis = v <= AXIS_TOL
    on_v_axis = u <= AXIS_TOL
    spectral_scale = max(P.a1, P.a2, 1.0)

    if on_u_axis and on_v_axis:
        eigenvalues = (complex(P.a1), complex(P.a2)) if P.is_classical else None
        return EquilibriumPoint(State2(0.0, 0.0), EquilibriumKind.TRIVIAL_E0, Stability.UNSTABLE, eigenvalues)

    if on_u_axis:
        if not P.is_classical:
            return EquilibriumPoint(location, EquilibriumKind.BOUNDARY_EU, Stability.FINITE_TIME_ATTRACTOR)
        eigenvalues = _ordered_eigenvalues(jacobian_modified(location, P))
        stability = _eigen_stability(np.array(eigenvalues), spectral_scale)
        return EquilibriumPoint(location, EquilibriumKind.BOUNDARY_EU, stability, eigenvalues)

    kind = EquilibriumKind.BOUNDARY_EV if on_v_axis else EquilibriumKind.INTERIOR
    J = jacobian_modified(location, P)
    eigenvalues = _ordered_eigenvalues(J)
    stability = _eigen_stability(np.array(eigenvalues), max(spectral_scale, max(abs(lam) for lam in eigenvalues)))
    if tangent:
        stability = Stability.NONHYPERBOLIC

    advisory: Dict[str, Any] = {}
    if kind == EquilibriumKind.BOUNDARY_EV and not P.is_classical:
        vp = v_phi(P)
        lower = v < vp
        advisory["branch"] = "lower" if lower else "upper"
        advisory["u_invasion_rate"] = P.a1 - P.c1 * v
        predicted = _boundary_v_prediction(P, v, lower, tangent)
        advisory["predicted_stability"] = predicted.value
        advisory["matches_prediction"] = predicted == stability
    elif kind == EquilibriumKind.INTERIOR and not P.is_classical:
        if P.competition_gap > 0:
            advisory.update(_stable_equilibrium_bounds(P, v))
        else:
            advisory["predicts_unstable"] = True

    return EquilibriumPoint(location, kind, stability, eigenvalues, advisory)


def _classical_report(P: CompetitionParams) -> EquilibriumReport:
    a_u, a_v = P.invariant_region
    candidates = [State2(0.0, 0.0), State2(a_u, 0.0), State2(0.0, a_v)]
    coexistence = classical_coexistence(P)
    if coexistence is not None:
        candidates.append(coexistence)
    points = [classify(loc, P) for loc in candidates]
    return EquilibriumReport(
        params=P,
        points=points,
        interior_count=1 if coexistence is not None else 0,
        boundary_v_count=1,
    )


def full_report(P: CompetitionParams) -> EquilibriumReport:
    """Every equilibrium of P, classified, ordered by kind then ascending v."""
    if P.is_classical:
        return _classical_report(P)

    _require_harvested(P)
    warnings: List[str] = []
    points: List[EquilibriumPoint] = [
        classify((0.0, 0.0), P),
        classify((P.a1 / P.b1, 0.0), P),
    ]

    vp = v_phi(P)
    ev_roots = boundary_v_equilibria(P)
    for v in ev_roots:
        points.append(classify((0.0, v), P, tangent=len(ev_roots) == 1))

    roots, tangent = _interior_roots(P, warnings)
    for v in roots:
        u = (P.a1 - P.c1 * v) / P.b1
        if u > 0 and v > 0:
            points.append(classify((u, v), P, tangent=tangent))

    vm = phi_vm = None
    if P.competition_gap > 0:
        vm = v_max(P)
        phi_vm = phi(vm, P)

    points.sort(key=lambda pt: (_KIND_ORDER[pt.kind], pt.location.v))
    report = EquilibriumReport(
        params=P,
        points=points,
        v_phi=vp,
        v_max=vm,
        phi_at_vmax=phi_vm,
        boundary_v_count=len(ev_roots),
        warnings=warnings,
    )
    report.interior_count = len(report.interior)
    logger.debug(
        f"q={P.q}: {report.interior_count} interior, {report.boundary_v_count} boundary-v equilibria"
    )
    return report
