"""
Two-biotype soybean aphid models with feeding facilitation and obviation of
resistance, with and without harvesting of the avirulent biotype.

State (h, xA, xV, A): cumulative density of both biotypes, avirulent density,
virulent density and the plant's remaining resistance threshold.

    h'  = a (xA + xV)
    xA' = (r - h)(xA - A)
    xV' = (r - h) xV
    A'  = -(k_r xV + k_f xV + k_f [xA > R] xA) A

The harvested variant uses (r q - h)(xA - A) - (1 - q) xA^p for xA and scales
the facilitation term by q. The single-biotype base model is h' = a x,
x' = (r - h) x.
"""

import logging
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DomainError, ParameterError
from .ode_sim import IntegratorOptions, ThresholdSwitch, Trajectory, integrate_system

logger = logging.getLogger(__name__)

DEFAULT_T_END = 120.0
FACILITATION = "facilitation"

APHID_LABELS = ("h", "xA", "xV", "A")
SINGLE_LABELS = ("h", "x")


class AphidModel(Enum):
    CLASSIC = "classic"
    HARVESTED = "harvested"
    SINGLE = "single"


@dataclass(frozen=True)
class AphidParams:
    """Rates and thresholds of the aphid models.

    p and q only enter the harvested model.
    """
    r: float
    a: float
    k_f: float
    k_r: float
    R: float
    p: float = 0.5
    q: float = 0.5

    def __post_init__(self):
        for name in ("r", "a", "k_f", "k_r", "R"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}", field=name)
        if self.k_r <= self.k_f:
            raise ParameterError(
                f"Obviation rate k_r ({self.k_r}) must exceed facilitation rate k_f ({self.k_f})",
                field="k_r",
            )
        if not 0 < self.p < 1:
            raise ParameterError(f"p must satisfy 0 < p < 1, got {self.p}", field="p")
        if not 0 < self.q <= 1:
            raise ParameterError(f"q must satisfy 0 < q <= 1, got {self.q}", field="q")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AphidParams":
        return cls(
            r=data["r"],
            a=data["a"],
            k_f=data["k_f"],
            k_r=data["k_r"],
            R=data["R"],
            p=data.get("p", 0.5),
            q=data.get("q", 0.5),
        )


@dataclass(frozen=True)
class AphidState:
    h: float
    xA: float
    xV: float
    A: float

    def __post_init__(self):
        if min(self.h, self.xA, self.xV, self.A) < 0:
            raise DomainError(f"Aphid state must be nonnegative, got {self.as_tuple()}")

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return self.h, self.xA, self.xV, self.A

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "AphidState":
        h, xA, xV, A = (float(x) for x in values)
        return cls(h, xA, xV, A)


def _facilitating(xA: float, R: float, facilitating: Optional[bool]) -> bool:
    return xA > R if facilitating is None else facilitating


def rhs_classic(s: Sequence[float], P: AphidParams, facilitating: Optional[bool] = None) -> np.ndarray:
    """Classic two-biotype vector field.

    ``facilitating`` overrides the xA > R test; the integrator passes the
    flag it tracks across localized crossings.
    """
    h, xA, xV, A = s
    sgn = 1.0 if _facilitating(xA, P.R, facilitating) else 0.0
    growth = P.r - h
    return np.array([
        P.a * (xA + xV),
        growth * (xA - A),
        growth * xV,
        -(P.k_r * xV + P.k_f * xV + P.k_f * sgn * xA) * A,
    ])


def rhs_harvested(s: Sequence[float], P: AphidParams, facilitating: Optional[bool] = None) -> np.ndarray:
    """Two-biotype vector field with sub-linear harvesting of the avirulent biotype."""
    h, xA, xV, A = s
    if xA < 0:
        raise DomainError(f"xA must be nonnegative, got {xA}")
    sgn = 1.0 if _facilitating(xA, P.R, facilitating) else 0.0
    harvest = xA ** P.p if xA > 0 else 0.0
    return np.array([
        P.a * (xA + xV),
        (P.r * P.q - h) * (xA - A) - (1 - P.q) * harvest,
        (P.r - h) * xV,
        -(P.k_r * xV + P.k_f * xV + P.q * P.k_f * sgn * xA) * A,
    ])


def rhs_single(s: Sequence[float], P: AphidParams) -> np.ndarray:
    h, x = s
    return np.array([P.a * x, (P.r - h) * x])


def simulate(
    P: AphidParams,
    s0: Sequence[float],
    t_end: float = DEFAULT_T_END,
    model: AphidModel = AphidModel.HARVESTED,
    opts: Optional[IntegratorOptions] = None,
) -> Trajectory:
    """Integrate an aphid model from ``s0``.

    Crossings of xA through R are localized as events so the facilitation
    switch never chatters inside a step. xA is pinned to 0 once it falls
    through the extinction threshold.
    """
    base = opts or IntegratorOptions()
    opts = IntegratorOptions(
        rel_tol=base.rel_tol,
        abs_tol=base.abs_tol,
        extinction_threshold=base.extinction_threshold,
        max_step=base.max_step,
        t_end=t_end,
        method=base.method,
        max_segments=base.max_segments,
    )

    if model == AphidModel.SINGLE:
        if len(s0) != 2:
            raise DomainError(f"Single-biotype model takes (h, x), got {len(s0)} values")
        if min(s0) < 0:
            raise DomainError(f"Aphid state must be nonnegative, got {list(s0)}")
        return integrate_system(lambda y, _flags: rhs_single(y, P), s0, opts, SINGLE_LABELS)

    state = AphidState.from_sequence(s0)
    field_fn = rhs_classic if model == AphidModel.CLASSIC else rhs_harvested
    logger.debug(f"Simulating {model.value} aphid model from {state.as_tuple()} to t={t_end}")

    return integrate_system(
        lambda y, flags: field_fn(y, P, flags[FACILITATION]),
        state.as_tuple(),
        opts,
        APHID_LABELS,
        extinction_indices=(1,),
        switches=(ThresholdSwitch(FACILITATION, index=1, level=P.R),),
    )


@dataclass
class PeakMetric:
    species: str
    value: float
    time: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _refine_peak(t: np.ndarray, y: np.ndarray, i: int) -> Tuple[float, float]:
    if i == 0 or i == len(y) - 1:
        return float(y[i]), float(t[i])
    ts, ys = t[i - 1:i + 2], y[i - 1:i + 2]
    if len(np.unique(ts)) < 3:
        return float(y[i]), float(t[i])
    c2, c1, c0 = np.polyfit(ts, ys, 2)
    if c2 >= 0:
        return float(y[i]), float(t[i])
    t_peak = -c1 / (2 * c2)
    if not ts[0] <= t_peak <= ts[-1]:
        return float(y[i]), float(t[i])
    return float(max(np.polyval([c2, c1, c0], t_peak), y[i])), float(t_peak)


def peak_metrics(traj: Trajectory, species: Optional[Sequence[str]] = None) -> Dict[str, PeakMetric]:
    """Peak value and time of each population, refined by a parabola through the top three samples."""
    if len(traj.times) == 0:
        raise DomainError("Cannot take peak metrics of an empty trajectory")
    if species is None:
        species = [label for label in traj.labels if label.startswith("x")]

    metrics = {}
    for label in species:
        y = traj.component(label)
        value, time = _refine_peak(traj.times, y, int(np.argmax(y)))
        metrics[label] = PeakMetric(label, value, time)
    return metrics
