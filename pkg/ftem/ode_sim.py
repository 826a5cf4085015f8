"""
Event-aware integration of the competition ODEs.

The harvested v equation is not Lipschitz at v = 0: below a small threshold
the sub-linear term wins and v reaches 0 in finite time, after which 0 is
no longer the unique continuation. Integration therefore runs in segments
with scipy's adaptive Dormand-Prince pair. A terminal event fires when a
component falls through the extinction threshold; the component is then
pinned to 0 and integration restarts on the reduced system.

The same machinery integrates systems with threshold switches (vector fields
that change form when a component crosses a level), used by the aphid models.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import solve_ivp

from .equilibria import EquilibriumKind, EquilibriumReport, Stability, full_report
from .exceptions import DomainError, IntegrationError, NumericalError, ParameterError
from .models import CompetitionParams, State2, StateLike, jacobian_modified, rhs_modified

logger = logging.getLogger(__name__)

# Fraction by which the invariant rectangle is inflated for separatrix exits
GAMMA_INFLATION = 0.05
MIN_SEPARATRIX_SPEED = 1e-10

RhsFunction = Callable[[np.ndarray, Dict[str, bool]], np.ndarray]


@dataclass
class IntegratorOptions:
    """Tolerances and limits for event-aware integration."""
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    extinction_threshold: float = 1e-10
    max_step: float = np.inf
    t_end: float = 100.0
    method: str = "RK45"
    max_segments: int = 1000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ParameterError("Integrator tolerances must be positive", field="rel_tol")
        if self.extinction_threshold <= 0:
            raise ParameterError("Extinction threshold must be positive", field="extinction_threshold")
        if self.t_end <= 0:
            raise ParameterError("t_end must be positive", field="t_end")
        if self.max_step <= 0:
            raise ParameterError("max_step must be positive", field="max_step")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "IntegratorOptions":
        defaults = cls()
        max_step = data.get("max_step")
        return cls(
            rel_tol=data.get("rel_tol", defaults.rel_tol),
            abs_tol=data.get("abs_tol", defaults.abs_tol),
            extinction_threshold=data.get("extinction_threshold", defaults.extinction_threshold),
            max_step=np.inf if max_step is None else max_step,
            t_end=data.get("t_end", defaults.t_end),
            method=data.get("method", defaults.method),
            max_segments=data.get("max_segments", defaults.max_segments),
        )


class EventKind(Enum):
    EXTINCTION = "extinction"
    SWITCH_ON = "switch_on"
    SWITCH_OFF = "switch_off"


@dataclass
class TrajectoryEvent:
    time: float
    species: str
    kind: EventKind
    value_before: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "time": self.time,
            "species": self.species,
            "kind": self.kind.value,
            "value_before": self.value_before,
        }


@dataclass
class Trajectory:
    """Accepted integrator steps and the events met along the way."""
    times: np.ndarray
    states: np.ndarray
    labels: Tuple[str, ...] = ("u", "v")
    events: List[TrajectoryEvent] = field(default_factory=list)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def component(self, label: str) -> np.ndarray:
        return self.states[:, self.labels.index(label)]

    def extinction_time(self, label: str) -> Optional[float]:
        for event in self.events:
            if event.kind == EventKind.EXTINCTION and event.species == label:
                return event.time
        return None

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=list(self.labels))
        frame.insert(0, "t", self.times)
        return frame

    def to_dict(self) -> Dict[str, Any]:
        return {
            "labels": list(self.labels),
            "times": self.times.tolist(),
            "states": self.states.tolist(),
            "events": [event.to_dict() for event in self.events],
        }


@dataclass(frozen=True)
class ThresholdSwitch:
    """The vector field changes form when component ``index`` crosses ``level``."""
    name: str
    index: int
    level: float


def _terminal(fn, direction: float):
    fn.terminal = True
    fn.direction = direction
    return fn


def integrate_system(
    rhs: RhsFunction,
    y0: Sequence[float],
    opts: IntegratorOptions,
    labels: Sequence[str],
    extinction_indices: Sequence[int] = (),
    switches: Sequence[ThresholdSwitch] = (),
) -> Trajectory:
    """Integrate ``rhs`` from t = 0 to ``opts.t_end`` in event-delimited segments.

    ``rhs(y, flags)`` receives the clamped state and the current switch flags
    (True while the switched component is above its level). Components listed
    in ``extinction_indices`` are pinned at 0 once they fall through the
    extinction threshold with negative drift.
    """
    y = np.array(y0, dtype=float)
    if np.any(y < 0):
        raise DomainError(f"Initial state must be nonnegative, got {y.tolist()}")

    labels = tuple(labels)
    delta = opts.extinction_threshold
    pinned: Set[int] = set()
    events: List[TrajectoryEvent] = []

    for i in extinction_indices:
        if y[i] == 0:
            pinned.add(i)
        elif y[i] <= delta:
            events.append(TrajectoryEvent(0.0, labels[i], EventKind.EXTINCTION, float(y[i])))
            pinned.add(i)
            y[i] = 0.0

    flags = {sw.name: bool(y[sw.index] > sw.level) for sw in switches}

    times: List[np.ndarray] = [np.array([0.0])]
    states: List[np.ndarray] = [y.reshape(1, -1).copy()]
    t = 0.0

    for _ in range(opts.max_segments):
        if t >= opts.t_end:
            break

        frozen_pins = sorted(pinned)
        frozen_flags = dict(flags)

        def fun(_t, z, pins=frozen_pins, fl=frozen_flags):
            z_eval = np.maximum(z, 0.0)
            z_eval[pins] = 0.0
            dz = np.asarray(rhs(z_eval, fl), dtype=float)
            dz[pins] = 0.0
            return dz

        event_fns = []
        event_meta: List[Tuple[str, Any]] = []
        for i in extinction_indices:
            if i in pinned:
                continue
            event_fns.append(_terminal(lambda _t, z, i=i: z[i] - delta, -1))
            event_meta.append(("extinction", i))
        for sw in switches:
            direction = -1 if flags[sw.name] else 1
            event_fns.append(_terminal(lambda _t, z, sw=sw: z[sw.index] - sw.level, direction))
            event_meta.append(("switch", sw))

        sol = solve_ivp(
            fun,
            (t, opts.t_end),
            y,
            method=opts.method,
            rtol=opts.rel_tol,
            atol=opts.abs_tol,
            max_step=opts.max_step,
            events=event_fns or None,
        )
        if sol.status == -1:
            failed_at = float(sol.t[-1])
            raise IntegrationError(f"Integration failed at t={failed_at:.6g}: {sol.message}", time=failed_at)

        times.append(sol.t[1:])
        states.append(sol.y[:, 1:].T)
        t = float(sol.t[-1])
        y = sol.y[:, -1].copy()

        if sol.status != 1:
            break

        for k, t_events in enumerate(sol.t_events):
            if len(t_events) == 0:
                continue
            kind, meta = event_meta[k]
            t_event = float(t_events[0])
            y_event = sol.y_events[k][0]
            if kind == "extinction":
                i = meta
                trial = np.maximum(y_event, 0.0)
                trial[i] = delta
                trial[frozen_pins] = 0.0
                drift = float(np.asarray(rhs(trial, frozen_flags))[i])
                if drift >= 0:
                    logger.debug(f"{labels[i]} touched the extinction threshold at t={t_event:.6g} without crossing")
                    continue
                pinned.add(i)
                y[i] = 0.0
                events.append(TrajectoryEvent(t_event, labels[i], EventKind.EXTINCTION, float(y_event[i])))
                logger.info(f"{labels[i]} extinct at t={t_event:.6g}")
            else:
                sw = meta
                flags[sw.name] = not flags[sw.name]
                kind_tag = EventKind.SWITCH_ON if flags[sw.name] else EventKind.SWITCH_OFF
                events.append(TrajectoryEvent(t_event, labels[sw.index], kind_tag, float(y_event[sw.index])))
                logger.debug(f"{sw.name} switched {'on' if flags[sw.name] else 'off'} at t={t_event:.6g}")
    else:
        logger.warning(f"Stopped after {opts.max_segments} segments at t={t:.6g}")

    all_states = np.maximum(np.vstack(states), 0.0)
    for i in pinned:
        ext_time = next(
            (ev.time for ev in events if ev.kind == EventKind.EXTINCTION and ev.species == labels[i]),
            0.0,
        )
        all_times = np.concatenate(times)
        all_states[all_times > ext_time, i] = 0.0

    return Trajectory(np.concatenate(times), all_states, labels, events)


def integrate(P: CompetitionParams, s0: StateLike, opts: Optional[IntegratorOptions] = None) -> Trajectory:
    """Integrate the competition system from ``s0``; q = 1 gives the classical model."""
    opts = opts or IntegratorOptions()
    u0, v0 = (float(x) for x in s0)
    U, V = P.invariant_region
    if u0 > U * (1 + GAMMA_INFLATION) or v0 > V * (1 + GAMMA_INFLATION):
        logger.warning(f"Initial state ({u0}, {v0}) lies outside the invariant region")

    extinction_indices = () if P.is_classical else (1,)
    return integrate_system(
        lambda y, _flags: rhs_modified(y, P),
        (u0, v0),
        opts,
        labels=("u", "v"),
        extinction_indices=extinction_indices,
    )


class Attractor(Enum):
    E0 = "e0"
    E_U = "e_u"
    E_V = "e_v"
    INTERIOR = "interior"
    OTHER = "other"


_KIND_TO_ATTRACTOR = {
    EquilibriumKind.TRIVIAL_E0: Attractor.E0,
    EquilibriumKind.BOUNDARY_EU: Attractor.E_U,
    EquilibriumKind.BOUNDARY_EV: Attractor.E_V,
    EquilibriumKind.INTERIOR: Attractor.INTERIOR,
}


def attractor_of(final_state: Sequence[float], report: EquilibriumReport, tol: float = 1e-3) -> Attractor:
    """Label a final state by the nearest reported equilibrium within ``tol``."""
    point = np.asarray(final_state, dtype=float)
    best, best_distance = None, np.inf
    for pt in report.points:
        distance = float(np.linalg.norm(point - pt.location.as_array()))
        if distance < best_distance:
            best, best_distance = pt, distance
    if best is None or best_distance > tol:
        return Attractor.OTHER
    return _KIND_TO_ATTRACTOR[best.kind]


@dataclass
class SeparatrixResult:
    """Stable manifold of a saddle, traced backward in time from both sides."""
    saddle: State2
    eigenvalues: Tuple[float, float]
    stable_vector: np.ndarray
    points: np.ndarray
    saddle_index: int
    termination: Tuple[str, str]

    def side_of(self, point: Sequence[float]) -> Tuple[int, float]:
        """Side (+1 or -1) of the polyline on which ``point`` lies, and its distance."""
        q = np.asarray(point, dtype=float)
        a = self.points[:-1]
        b = self.points[1:]
        ab = b - a
        length2 = np.einsum("ij,ij->i", ab, ab)
        length2 = np.where(length2 > 0, length2, np.finfo(float).tiny)
        s = np.clip(np.einsum("ij,ij->i", q - a, ab) / length2, 0.0, 1.0)
        closest = a + s[:, None] * ab
        distances = np.linalg.norm(q - closest, axis=1)
        k = int(np.argmin(distances))
        cross = ab[k, 0] * (q[1] - a[k, 1]) - ab[k, 1] * (q[0] - a[k, 0])
        return (1 if cross > 0 else -1), float(distances[k])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points, columns=["u", "v"])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "saddle": self.saddle.to_dict(),
            "eigenvalues": list(self.eigenvalues),
            "stable_vector": self.stable_vector.tolist(),
            "saddle_index": self.saddle_index,
            "termination": list(self.termination),
            "points": self.points.tolist(),
        }


def _stable_direction(J: np.ndarray) -> Tuple[np.ndarray, Tuple[float, float]]:
    eigenvalues, eigenvectors = np.linalg.eig(J)
    if np.any(np.abs(np.imag(eigenvalues)) > 0):
        raise NumericalError("Saddle has complex eigenvalues; no stable direction")
    eigenvalues = np.real(eigenvalues)
    order = np.argsort(eigenvalues)
    lam_s, lam_u = eigenvalues[order[0]], eigenvalues[order[1]]
    if not (lam_s < 0 < lam_u):
        raise NumericalError(f"Eigenvalues {lam_s:.4g}, {lam_u:.4g} do not define a saddle")
    w = np.real(eigenvectors[:, order[0]])
    w = w / np.linalg.norm(w)
    if w[0] < 0 or (w[0] == 0 and w[1] < 0):
        w = -w
    return w, (float(lam_s), float(lam_u))


def _trace_branch(
    P: CompetitionParams,
    start: np.ndarray,
    arc_len: float,
    t_max: float,
    opts: IntegratorOptions,
) -> Tuple[np.ndarray, str]:
    U, V = P.invariant_region
    lo_u, hi_u = -GAMMA_INFLATION * U, (1 + GAMMA_INFLATION) * U
    lo_v, hi_v = -GAMMA_INFLATION * V, (1 + GAMMA_INFLATION) * V

    def backward(_t, z):
        F = rhs_modified(np.maximum(z[:2], 0.0), P)
        return np.array([-F[0], -F[1], float(np.hypot(F[0], F[1]))])

    def speed(_t, z):
        F = rhs_modified(np.maximum(z[:2], 0.0), P)
        return float(np.hypot(F[0], F[1])) - MIN_SEPARATRIX_SPEED

    events = [
        _terminal(lambda _t, z: z[2] - arc_len, 1),
        _terminal(lambda _t, z: z[0] - lo_u, -1),
        _terminal(lambda _t, z: hi_u - z[0], -1),
        _terminal(lambda _t, z: z[1] - lo_v, -1),
        _terminal(lambda _t, z: hi_v - z[1], -1),
        _terminal(speed, -1),
    ]
    reasons = ["arc_length", "left_region", "left_region", "left_region", "left_region", "stalled"]

    sol = solve_ivp(
        backward,
        (0.0, t_max),
        np.array([start[0], start[1], 0.0]),
        method=opts.method,
        rtol=min(opts.rel_tol, 1e-9),
        atol=opts.abs_tol,
        max_step=opts.max_step,
        events=events,
    )
    if sol.status == -1:
        raise IntegrationError(f"Separatrix integration failed: {sol.message}", time=float(sol.t[-1]))

    reason = "t_max"
    if sol.status == 1:
        fired = [k for k, te in enumerate(sol.t_events) if len(te)]
        reason = reasons[fired[0]]
    return sol.y[:2].T, reason


def separatrix(
    P: CompetitionParams,
    saddle: StateLike,
    arc_len: float = 2.0,
    opts: Optional[IntegratorOptions] = None,
    eps_scale: float = 1e-6,
    t_max: float = 1e4,
) -> SeparatrixResult:
    """Stable manifold through ``saddle`` as a polyline ordered along the curve."""
    opts = opts or IntegratorOptions()
    s = np.array([float(x) for x in saddle])
    J = jacobian_modified(s, P)
    w, eigenvalues = _stable_direction(J)
    eps = eps_scale * max(P.invariant_region)

    minus, reason_minus = _trace_branch(P, s - eps * w, arc_len, t_max, opts)
    plus, reason_plus = _trace_branch(P, s + eps * w, arc_len, t_max, opts)

    points = np.vstack([minus[::-1], s.reshape(1, 2), plus])
    logger.debug(f"Separatrix through ({s[0]:.6g}, {s[1]:.6g}): {len(points)} points, ends {reason_minus}/{reason_plus}")
    return SeparatrixResult(
        saddle=State2.from_array(s),
        eigenvalues=eigenvalues,
        stable_vector=w,
        points=points,
        saddle_index=len(minus),
        termination=(reason_minus, reason_plus),
    )


@dataclass
class PortraitGrid:
    """Sub-rectangle of the invariant region covered by a phase portrait."""
    u_min: float = 0.0
    u_max: Optional[float] = None
    v_min: float = 0.0
    v_max: Optional[float] = None
    n_samples: int = 400
    arc_len: float = 2.0

    def resolved(self, P: CompetitionParams) -> "PortraitGrid":
        U, V = P.invariant_region
        return PortraitGrid(
            u_min=self.u_min,
            u_max=U if self.u_max is None else self.u_max,
            v_min=self.v_min,
            v_max=V if self.v_max is None else self.v_max,
            n_samples=self.n_samples,
            arc_len=self.arc_len,
        )


@dataclass
class PhasePortrait:
    u_nullcline: np.ndarray
    v_nullcline: np.ndarray
    report: EquilibriumReport
    separatrices: List[SeparatrixResult]
    trajectories: List[Trajectory]

    def to_frames(self) -> Dict[str, pd.DataFrame]:
        frames = {
            "u_nullcline": pd.DataFrame(self.u_nullcline, columns=["u", "v"]),
            "v_nullcline": pd.DataFrame(self.v_nullcline, columns=["u", "v"]),
            "equilibria": pd.DataFrame([
                {
                    "u": pt.location.u,
                    "v": pt.location.v,
                    "kind": pt.kind.value,
                    "stability": pt.stability.value,
                }
                for pt in self.report.points
            ]),
        }
        for k, sep in enumerate(self.separatrices):
            frames[f"separatrix_{k + 1}"] = sep.to_frame()
        for k, traj in enumerate(self.trajectories):
            frames[f"trajectory_{k + 1}"] = traj.to_frame()
        return frames


def v_nullcline_u(v: np.ndarray, P: CompetitionParams) -> np.ndarray:
    """u on the nontrivial v-nullcline for each v > 0."""
    v = np.asarray(v, dtype=float)
    harvest = (1 - P.q) * v ** (P.p - 1) if P.q < 1 else 0.0
    return (P.a2 * P.q - P.b2 * v - harvest) / P.c2


def phase_portrait(
    P: CompetitionParams,
    grid: Optional[PortraitGrid] = None,
    opts: Optional[IntegratorOptions] = None,
) -> PhasePortrait:
    """Nullclines, classified equilibria, separatrices and a corner trajectory fan."""
    grid = (grid or PortraitGrid()).resolved(P)
    opts = opts or IntegratorOptions(t_end=200.0)

    # u-nullcline is the line b1 u + c1 v = a1, clipped to the grid
    u_lo = max(grid.u_min, (P.a1 - P.c1 * grid.v_max) / P.b1)
    u_hi = min(grid.u_max, (P.a1 - P.c1 * grid.v_min) / P.b1)
    u = np.linspace(u_lo, u_hi, grid.n_samples) if u_lo <= u_hi else np.empty(0)
    u_null = np.column_stack([u, (P.a1 - P.b1 * u) / P.c1])

    v = np.geomspace(max(grid.v_min, grid.v_max * 1e-6), grid.v_max, grid.n_samples)
    u_of_v = v_nullcline_u(v, P)
    keep = (u_of_v >= max(grid.u_min, 0.0)) & (u_of_v <= grid.u_max)
    v_null = np.column_stack([u_of_v[keep], v[keep]])

    report = full_report(P)
    separatrices = []
    for pt in report.interior:
        if pt.stability == Stability.SADDLE:
            separatrices.append(separatrix(P, pt.location, grid.arc_len, opts))

    corners = [
        (grid.u_min, grid.v_min),
        (grid.u_max, grid.v_min),
        (grid.u_min, grid.v_max),
        (grid.u_max, grid.v_max),
    ]
    trajectories = [integrate(P, corner, opts) for corner in corners]
    return PhasePortrait(u_null, v_null, report, separatrices, trajectories)


@dataclass
class BasinSample:
    u0: float
    v0: float
    attractor: Attractor
    extinction_time: Optional[float] = None
    side: Optional[int] = None
    separatrix_distance: Optional[float] = None
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["attractor"] = self.attractor.value
        return data


def basin_scan(
    P: CompetitionParams,
    n_samples: int,
    seed: int = 0,
    opts: Optional[IntegratorOptions] = None,
    jobs: int = 1,
    sep: Optional[SeparatrixResult] = None,
    on_progress: Optional[Callable[[int, int], None]] = None,
) -> List[BasinSample]:
    """Integrate seeded random starts in the invariant region and label their attractors."""
    opts = opts or IntegratorOptions(t_end=500.0)
    U, V = P.invariant_region
    rng = np.random.default_rng(seed)
    starts = np.column_stack([rng.uniform(0.0, U, n_samples), rng.uniform(0.0, V, n_samples)])
    report = full_report(P)

    def run_one(start: np.ndarray) -> BasinSample:
        traj = integrate(P, start, opts)
        sample = BasinSample(
            u0=float(start[0]),
            v0=float(start[1]),
            attractor=attractor_of(traj.final_state, report),
            extinction_time=traj.extinction_time("v"),
        )
        if sep is not None:
            sample.side, sample.separatrix_distance = sep.side_of(start)
        return sample

    samples: Dict[int, BasinSample] = {}
    completed = 0
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        future_to_index = {executor.submit(run_one, start): idx for idx, start in enumerate(starts)}
        for future in as_completed(future_to_index):
            idx = future_to_index[future]
            completed += 1
            try:
                samples[idx] = future.result()
            except Exception as e:
                logger.error(f"Basin sample {idx} failed: {e}")
                samples[idx] = BasinSample(
                    u0=float(starts[idx][0]), v0=float(starts[idx][1]), attractor=Attractor.OTHER, error=str(e)
                )
            if on_progress:
                on_progress(completed, n_samples)

    return [samples[idx] for idx in range(n_samples)]
