"""
Parameter and state types for the two-species competition models, plus the
right-hand sides and Jacobians of the classical and harvested systems.

Classical:

    u' = a1 u - b1 u^2 - c1 u v
    v' = a2 v - b2 v^2 - c2 u v

Harvested (a fraction 1 - q of v is removed through a sub-linear term):

    v' = a2 q v - b2 v^2 - c2 u v - (1 - q) v^p
"""

import math
from dataclasses import dataclass, asdict, replace
from enum import Enum
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import DomainError, ParameterError, SingularJacobianError


# Relative tolerance for ties between regime inequalities
REGIME_TOLERANCE = 1e-10


class Regime(Enum):
    """Outcome of the classical (q = 1) competition."""
    U_EXCLUDES_V = "u_excludes_v"
    V_EXCLUDES_U = "v_excludes_u"
    WEAK_COEXISTENCE = "weak_coexistence"
    STRONG_BISTABLE = "strong_bistable"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class CompetitionParams:
    """The eight scalars of the harvested competition model.

    q = 1 recovers the classical model regardless of p.
    """
    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    p: float = 1.0
    q: float = 1.0

    def __post_init__(self):
        for name in ("a1", "a2", "b1", "b2", "c1", "c2"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value)) or value <= 0:
                raise ParameterError(f"{name} must be a positive number, got {value!r}", field=name)
        if not 0 < self.p <= 1:
            raise ParameterError(f"p must satisfy 0 < p <= 1, got {self.p}", field="p")
        if not 0 < self.q <= 1:
            raise ParameterError(f"q must satisfy 0 < q <= 1, got {self.q}", field="q")

    @property
    def is_classical(self) -> bool:
        return self.q == 1.0

    @property
    def competition_gap(self) -> float:
        """b1 b2 - c1 c2; positive means intraspecific competition dominates."""
        return self.b1 * self.b2 - self.c1 * self.c2

    @property
    def invariant_region(self) -> Tuple[float, float]:
        """Upper corner (a1/b1, a2/b2) of the positively invariant rectangle."""
        return self.a1 / self.b1, self.a2 / self.b2

    def with_q(self, q: float) -> "CompetitionParams":
        return replace(self, q=q)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CompetitionParams":
        return cls(
            a1=data["a1"],
            a2=data["a2"],
            b1=data["b1"],
            b2=data["b2"],
            c1=data["c1"],
            c2=data["c2"],
            p=data.get("p", 1.0),
            q=data.get("q", 1.0),
        )


@dataclass(frozen=True)
class State2:
    """Densities of species u and v."""
    u: float
    v: float

    def __post_init__(self):
        if self.u < 0 or self.v < 0:
            raise DomainError(f"State must be nonnegative, got ({self.u}, {self.v})")

    def __iter__(self) -> Iterator[float]:
        yield self.u
        yield self.v

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "State2":
        return cls(float(values[0]), float(values[1]))

    def to_dict(self) -> Dict[str, float]:
        return {"u": self.u, "v": self.v}


StateLike = Union[State2, Sequence[float], np.ndarray]


def _unpack(s: StateLike) -> Tuple[float, float]:
    u, v = s
    u, v = float(u), float(v)
    if u < 0 or v < 0:
        raise DomainError(f"State must be nonnegative, got ({u}, {v})")
    return u, v


def rhs_classical(s: StateLike, P: CompetitionParams) -> np.ndarray:
    """Right-hand side of the classical competition system."""
    u, v = _unpack(s)
    return np.array([
        P.a1 * u - P.b1 * u ** 2 - P.c1 * u * v,
        P.a2 * v - P.b2 * v ** 2 - P.c2 * u * v,
    ])


def rhs_modified(s: StateLike, P: CompetitionParams) -> np.ndarray:
    """Right-hand side of the harvested system; 0^p is taken as 0."""
    u, v = _unpack(s)
    harvest = v ** P.p if v > 0 else 0.0
    return np.array([
        P.a1 * u - P.b1 * u ** 2 - P.c1 * u * v,
        P.a2 * P.q * v - P.b2 * v ** 2 - P.c2 * u * v - (1 - P.q) * harvest,
    ])


def rhs_q_derivative(s: StateLike, P: CompetitionParams) -> np.ndarray:
    """Partial derivative of rhs_modified with respect to q."""
    u, v = _unpack(s)
    harvest = v ** P.p if v > 0 else 0.0
    return np.array([0.0, P.a2 * v + harvest])


def jacobian_modified(s: StateLike, P: CompetitionParams) -> np.ndarray:
    """Jacobian of the harvested system.

    Raises:
        SingularJacobianError: at v = 0 with q < 1, where v^(p-1) is unbounded
            and the linearization says nothing about the finite-time dynamics.
    """
    u, v = _unpack(s)
    if P.q < 1:
        if v == 0:
            raise SingularJacobianError(
                "Jacobian is singular at v = 0 when q < 1 (finite-time attraction regime)"
            )
        harvest = P.p * (1 - P.q) * v ** (P.p - 1)
    else:
        harvest = 0.0

    return np.array([
        [P.a1 - 2 * P.b1 * u - P.c1 * v, -P.c1 * u],
        [-P.c2 * v, P.a2 * P.q - 2 * P.b2 * v - P.c2 * u - harvest],
    ])


def hessians_modified(s: StateLike, P: CompetitionParams) -> Tuple[np.ndarray, np.ndarray]:
    """Second-derivative matrices of both components at a point with v > 0."""
    u, v = _unpack(s)
    if v == 0:
        raise DomainError("Second derivatives are unbounded at v = 0")
    h1 = np.array([
        [-2 * P.b1, -P.c1],
        [-P.c1, 0.0],
    ])
    h2 = np.array([
        [0.0, -P.c2],
        [-P.c2, -2 * P.b2 - (1 - P.q) * P.p * (P.p - 1) * v ** (P.p - 2)],
    ])
    return h1, h2


def classical_coexistence(P: CompetitionParams) -> Optional[State2]:
    """Interior equilibrium E* of the classical system, if it is positive."""
    det = P.competition_gap
    if det == 0:
        return None
    u = (P.a1 * P.b2 - P.a2 * P.c1) / det
    v = (P.a2 * P.b1 - P.a1 * P.c2) / det
    if u <= 0 or v <= 0:
        return None
    return State2(u, v)


def _close(x: float, y: float, tol: float) -> bool:
    return abs(x - y) <= tol * max(abs(x), abs(y), 1.0)


def classify_classical_regime(P: CompetitionParams, tol: float = REGIME_TOLERANCE) -> Regime:
    """Classify the classical competition outcome from the growth-rate ratio.

    With rho = a1/a2:
      - rho > b1/c2 and rho > c1/b2: u excludes v
      - rho < b1/c2 and rho < c1/b2: v excludes u
      - c1/b2 < rho < b1/c2: weak competition, stable coexistence
      - b1/c2 < rho < c1/b2: strong competition, bistable exclusion
    """
    if not P.is_classical:
        raise ParameterError(f"Classical regime classification requires q = 1, got q = {P.q}", field="q")

    rho = P.a1 / P.a2
    u_invades = P.b1 / P.c2
    v_invades = P.c1 / P.b2

    if (
        _close(rho, u_invades, tol)
        or _close(rho, v_invades, tol)
        or _close(P.b1 * P.b2, P.c1 * P.c2, tol)
    ):
        return Regime.DEGENERATE

    if rho > u_invades and rho > v_invades:
        return Regime.U_EXCLUDES_V
    if rho < u_invades and rho < v_invades:
        return Regime.V_EXCLUDES_U
    if v_invades < rho < u_invades:
        return Regime.WEAK_COEXISTENCE
    return Regime.STRONG_BISTABLE
