"""
Method-of-lines solver for the one-dimensional competition-diffusion system

    u_t = d1 u_xx + u (m(x) - u - v)
    v_t = (d2 (1 - k) v_x + k |v_x|^(p-2) v_x)_x + v (m(x) - u - v)

on an interval with zero-flux boundaries, plus the comparison-ODE diagnostic
for finite-time extinction of v under fast (p < 2) diffusion.

Fields live at cell centres; fluxes are evaluated at faces from one-sided
differences, so both schemes keep the divergence form and conserve mass
when reactions are switched off.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import polynomial
from scipy.linalg import solve_banded

from .exceptions import DomainError, ParameterError, StabilityError

logger = logging.getLogger(__name__)

CFL_SAFETY = 0.9
EXTINCTION_TOL = 1e-6
# Explicit reaction step keeps dt * |m - u - v| below this
REACTION_SAFETY = 0.2
# Relative tolerance for treating Y0 as sitting on the comparison equilibrium
EQUILIBRIUM_RTOL = 1e-12

SCHEMES = ("explicit", "imex")

# Named profiles as ascending polynomial coefficients in x
PROFILE_PRESETS: Dict[str, List[float]] = {
    "linear:3-x": [3.0, -1.0],
    "linear:1.5-x": [1.5, -1.0],
    "linear:29-x": [29.0, -1.0],
    "quad:30+x^2": [30.0, 0.0, 1.0],
    "quad:x^2": [0.0, 0.0, 1.0],
}

ProfileSpec = Union[str, float, int, Sequence[float]]


def resolve_profile(profile: ProfileSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Turn a preset name, a constant or a coefficient list into a function of x."""
    if isinstance(profile, str):
        if profile not in PROFILE_PRESETS:
            raise ParameterError(
                f"Unknown profile '{profile}', expected one of {sorted(PROFILE_PRESETS)} or a coefficient list",
                field="profile",
            )
        coefficients = PROFILE_PRESETS[profile]
    elif isinstance(profile, (int, float)):
        coefficients = [float(profile)]
    else:
        coefficients = [float(c) for c in profile]
        if not coefficients:
            raise ParameterError("Profile coefficient list is empty", field="profile")

    return lambda x: polynomial.polyval(np.asarray(x, dtype=float), coefficients) + np.zeros_like(x, dtype=float)


@dataclass
class PdeConfig:
    """Grid, diffusion and time-stepping settings for one PDE run.

    ``dt`` of None selects adaptive steps; a fixed ``dt`` that breaks the
    explicit stability limit raises StabilityError.
    """
    d1: float
    d2: float
    k: float
    p: float
    m: ProfileSpec = "linear:3-x"
    x_lo: float = 0.0
    x_hi: float = 1.0
    n_cells: int = 512
    eps_reg: float = 1e-8
    dt: Optional[float] = None
    dt_max: float = 1e-2
    t_end: float = 100.0
    scheme: str = "imex"
    reactions: bool = True
    n_snapshots: int = 11
    extinction_tol: float = EXTINCTION_TOL
    embedding_constant: float = 1.0

    def __post_init__(self):
        if not 1 < self.p <= 2:
            raise ParameterError(f"p must satisfy 1 < p <= 2, got {self.p}", field="p")
        if not 0 <= self.k <= 1:
            raise ParameterError(f"k must satisfy 0 <= k <= 1, got {self.k}", field="k")
        if self.d1 <= 0 or self.d2 <= 0:
            raise ParameterError("Diffusion coefficients must be positive", field="d1" if self.d1 <= 0 else "d2")
        if self.p < 2 and self.eps_reg <= 0:
            raise ParameterError("eps_reg must be positive when p < 2", field="eps_reg")
        if self.x_hi <= self.x_lo:
            raise ParameterError("Domain must satisfy x_lo < x_hi", field="x_hi")
        if self.n_cells < 2:
            raise ParameterError("n_cells must be at least 2", field="n_cells")
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'", field="scheme")
        if self.dt is not None and self.dt <= 0:
            raise ParameterError("dt must be positive", field="dt")
        if self.t_end <= 0:
            raise ParameterError("t_end must be positive", field="t_end")
        if np.any(self.resource() < 0):
            raise ParameterError("Resource function m must be nonnegative on the domain", field="m")

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def x(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.n_cells) + 0.5) * self.dx

    def resource(self) -> np.ndarray:
        return resolve_profile(self.m)(self.x)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class PdeState:
    t: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if np.any(self.u < 0) or np.any(self.v < 0):
            raise DomainError("PDE fields must be nonnegative")


def flux_v(grad: Union[float, np.ndarray], d2: float, k: float, p: float, eps_reg: float) -> Union[float, np.ndarray]:
    """Regularized quasi-linear flux d2 (1-k) g + k (g^2 + eps^2)^((p-2)/2) g; exact at p = 2."""
    if p == 2:
        return (d2 * (1 - k) + k) * grad
    return d2 * (1 - k) * grad + k * (grad * grad + eps_reg * eps_reg) ** ((p - 2) / 2) * grad


def _face_gradients(w: np.ndarray, dx: float) -> np.ndarray:
    return np.diff(w) / dx


def _v_face_diffusivity(v: np.ndarray, cfg: PdeConfig) -> np.ndarray:
    """Secant diffusivity flux_v(g)/g at interior faces."""
    g = _face_gradients(v, cfg.dx)
    if cfg.p == 2:
        return np.full_like(g, cfg.d2 * (1 - cfg.k) + cfg.k)
    return cfg.d2 * (1 - cfg.k) + cfg.k * (g * g + cfg.eps_reg ** 2) ** ((cfg.p - 2) / 2)


def _divergence(face_flux: np.ndarray, dx: float) -> np.ndarray:
    padded = np.concatenate([[0.0], face_flux, [0.0]])
    return np.diff(padded) / dx


def _reaction(state: PdeState, m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    growth = m - state.u - state.v
    return state.u * growth, state.v * growth


def explicit_dt_limit(state: PdeState, cfg: PdeConfig) -> float:
    """Largest stable explicit diffusion step: cfl * dx^2 / (2 max effective diffusivity)."""
    d_max = max(cfg.d1, float(np.max(_v_face_diffusivity(state.v, cfg))))
    return CFL_SAFETY * cfg.dx ** 2 / (2 * d_max)


def _reaction_dt_limit(state: PdeState, m: np.ndarray) -> float:
    rate = float(np.max(np.abs(m - state.u - state.v)))
    return REACTION_SAFETY / rate if rate > 0 else np.inf


def stable_dt(state: PdeState, cfg: PdeConfig, m: Optional[np.ndarray] = None) -> float:
    """Time step for the next update under the configured scheme and dt policy."""
    m = cfg.resource() if m is None else m
    reaction_limit = _reaction_dt_limit(state, m) if cfg.reactions else np.inf

    if cfg.scheme == "explicit":
        limit = explicit_dt_limit(state, cfg)
        if cfg.dt is not None:
            if cfg.dt > limit:
                raise StabilityError(
                    f"Fixed dt={cfg.dt:.3g} exceeds the explicit stability limit {limit:.3g}",
                    dt=cfg.dt,
                    dt_max=limit,
                )
            return cfg.dt
        return min(limit, reaction_limit)

    if cfg.dt is not None:
        return cfg.dt
    return min(cfg.dt_max, reaction_limit)


def _implicit_diffusion(w: np.ndarray, face_d: np.ndarray, dt: float, dx: float) -> np.ndarray:
    """Solve (I - dt L) w_new = w with L the zero-flux diffusion operator for face coefficients."""
    n = len(w)
    r = dt * face_d / dx ** 2
    ab = np.zeros((3, n))
    ab[0, 1:] = -r
    ab[2, :-1] = -r
    ab[1, :] = 1.0
    ab[1, :-1] += r
    ab[1, 1:] += r
    return solve_banded((1, 1), ab, w)


def _clip(w: np.ndarray, name: str, t: float, dx: float) -> np.ndarray:
    negative = w < 0
    if np.any(negative):
        lost = float(-np.sum(w[negative]) * dx)
        logger.warning(f"Clipped negative {name} mass {lost:.3e} at t={t:.6g}")
        w = np.where(negative, 0.0, w)
    return w


def step(state: PdeState, cfg: PdeConfig, dt: Optional[float] = None, m: Optional[np.ndarray] = None) -> PdeState:
    """Advance one time step with the configured scheme."""
    m = cfg.resource() if m is None else m
    dt = stable_dt(state, cfg, m) if dt is None else dt
    dx = cfg.dx

    if cfg.reactions:
        ru, rv = _reaction(state, m)
    else:
        ru = rv = np.zeros_like(state.u)

    if cfg.scheme == "explicit":
        flux_u = cfg.d1 * _face_gradients(state.u, dx)
        flux_vv = flux_v(_face_gradients(state.v, dx), cfg.d2, cfg.k, cfg.p, cfg.eps_reg)
        u = state.u + dt * (_divergence(flux_u, dx) + ru)
        v = state.v + dt * (_divergence(flux_vv, dx) + rv)
    else:
        u = _implicit_diffusion(state.u + dt * ru, np.full(cfg.n_cells - 1, cfg.d1), dt, dx)
        v = _implicit_diffusion(state.v + dt * rv, _v_face_diffusivity(state.v, cfg), dt, dx)

    t = state.t + dt
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise StabilityError(f"PDE solution blew up at t={t:.6g}", dt=dt)

    return PdeState(t, _clip(u, "u", t, dx), _clip(v, "v", t, dx))


def l2_norm(w: np.ndarray, dx: float) -> float:
    return float(np.sqrt(np.sum(w * w) * dx))


class Outcome(Enum):
    U_WINS = "u_wins"
    V_WINS = "v_wins"
    COEXIST = "coexist"
    UNDECIDED = "undecided"


@dataclass
class PdeRunResult:
    """Snapshots and per-step norm series of one PDE run."""
    config: PdeConfig
    x: np.ndarray
    snapshots: List[PdeState] = field(default_factory=list)
    norms: List[Tuple[float, float, float, float, float]] = field(default_factory=list)
    extinct_species: Optional[str] = None
    extinction_time: Optional[float] = None
    steps: int = 0

    @property
    def final(self) -> PdeState:
        return self.snapshots[-1]

    def norms_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.norms, columns=["t", "l2_u", "l2_v", "sup_u", "sup_v"])

    def snapshots_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame({"t": snap.t, "x": self.x, "u": snap.u, "v": snap.v})
            for snap in self.snapshots
        ]
        return pd.concat(frames, ignore_index=True)


def _record(result: PdeRunResult, state: PdeState, dx: float):
    result.norms.append((
        state.t,
        l2_norm(state.u, dx),
        l2_norm(state.v, dx),
        float(np.max(state.u)),
        float(np.max(state.v)),
    ))


def _initial_field(profile: Union[ProfileSpec, np.ndarray], x: np.ndarray, name: str) -> np.ndarray:
    if isinstance(profile, np.ndarray):
        if profile.shape != x.shape:
            raise DomainError(f"{name} has {profile.shape} values for {x.shape} cells")
        values = profile.astype(float)
    else:
        values = resolve_profile(profile)(x)
    if np.any(values < 0):
        raise DomainError(f"Initial field {name} must be nonnegative on the grid")
    return values


def run(
    cfg: PdeConfig,
    u0: Union[ProfileSpec, np.ndarray],
    v0: Union[ProfileSpec, np.ndarray],
    max_steps: Optional[int] = None,
) -> PdeRunResult:
    """Integrate to ``cfg.t_end`` or until the sup-norm of a field drops below the extinction tolerance."""
    x = cfg.x
    m = cfg.resource()
    state = PdeState(0.0, _initial_field(u0, x, "u0"), _initial_field(v0, x, "v0"))
    result = PdeRunResult(config=cfg, x=x)
    result.snapshots.append(state)
    _record(result, state, cfg.dx)

    snapshot_times = np.linspace(0.0, cfg.t_end, max(cfg.n_snapshots, 2))[1:]
    next_snapshot = 0

    logger.info(
        f"PDE run: {cfg.scheme} scheme, {cfg.n_cells} cells, p={cfg.p}, k={cfg.k}, t_end={cfg.t_end}"
    )

    while True:
        for name, w in (("u", state.u), ("v", state.v)):
            if np.max(w) < cfg.extinction_tol:
                result.extinct_species = name
                result.extinction_time = state.t
                logger.info(f"{name} fell below {cfg.extinction_tol:g} at t={state.t:.6g}")
                break
        if result.extinct_species or state.t >= cfg.t_end:
            break
        if max_steps is not None and result.steps >= max_steps:
            logger.warning(f"Stopped after {max_steps} steps at t={state.t:.6g}")
            break

        dt = stable_dt(state, cfg, m)
        if next_snapshot < len(snapshot_times):
            remaining = snapshot_times[next_snapshot] - state.t
        else:
            remaining = cfg.t_end - state.t
        if dt >= remaining:
            dt = remaining
        state = step(state, cfg, dt, m)
        result.steps += 1
        _record(result, state, cfg.dx)

        if next_snapshot < len(snapshot_times) and state.t >= snapshot_times[next_snapshot] - 1e-12:
            state = PdeState(float(snapshot_times[next_snapshot]), state.u, state.v)
            result.snapshots.append(state)
            next_snapshot += 1
            logger.debug(f"Snapshot at t={state.t:.6g}")

    if result.snapshots[-1] is not state:
        result.snapshots.append(state)
    return result


def outcome(result: PdeRunResult, tol: float = EXTINCTION_TOL) -> Outcome:
    """Classify the end state of a run from its L2 norms."""
    t, l2_u, l2_v, _, _ = result.norms[-1]
    if l2_v < tol and l2_u > tol:
        return Outcome.U_WINS
    if l2_u < tol and l2_v > tol:
        return Outcome.V_WINS
    if l2_u > tol and l2_v > tol:
        window = [row for row in result.norms if row[0] >= 0.9 * t]
        if len(window) >= 2:
            drift_u = abs(window[-1][1] - window[0][1]) / l2_u
            drift_v = abs(window[-1][2] - window[0][2]) / l2_v
            if drift_u < 1e-6 and drift_v < 1e-6:
                return Outcome.COEXIST
    return Outcome.UNDECIDED


def leading_species(result: PdeRunResult, window: float = 0.5) -> Optional[str]:
    """Species whose share of ||u|| + ||v|| grew over the last ``window`` fraction of the run.

    Selection between near-neutral competitors can take far longer than any
    practical horizon; the sign of the drift shows who is winning before
    ``outcome`` can decide.
    """
    t_last = result.norms[-1][0]
    rows = [row for row in result.norms if row[0] >= (1 - window) * t_last]
    if len(rows) < 2:
        return None

    def v_share(row) -> float:
        total = row[1] + row[2]
        return row[2] / total if total > 0 else 0.5

    drift = v_share(rows[-1]) - v_share(rows[0])
    if drift > 0:
        return "v"
    if drift < 0:
        return "u"
    return None


@dataclass
class FteSupersolution:
    extinction_time: Optional[float]
    times: np.ndarray
    values: np.ndarray


def fte_supersolution(
    Y0: float,
    M: float,
    C_tilde: float,
    alpha: float,
    n_points: int = 201,
    horizon: Optional[float] = None,
) -> FteSupersolution:
    """Closed-form solution of Y' = M Y - C_tilde Y^alpha through Z = Y^(1 - alpha).

    Z(t) = C/M + (Z0 - C/M) exp((1 - alpha) M t). When Z0 < C/M the curve
    reaches 0 at t* = ln[(C/M) / (C/M - Z0)] / ((1 - alpha) M); otherwise there
    is no extinction.
    """
    if M <= 0 or C_tilde <= 0:
        raise ParameterError("M and C_tilde must be positive", field="M" if M <= 0 else "C_tilde")
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must satisfy 0 < alpha < 1, got {alpha}", field="alpha")
    if Y0 < 0:
        raise DomainError(f"Y0 must be nonnegative, got {Y0}")

    beta = 1 - alpha
    ratio = C_tilde / M
    z0 = Y0 ** beta

    if z0 >= ratio * (1 - EQUILIBRIUM_RTOL):
        t_star = None
        t_last = horizon if horizon is not None else 1.0 / (beta * M)
    else:
        t_star = math.log(ratio / (ratio - z0)) / (beta * M)
        t_last = t_star if horizon is None else min(horizon, t_star)

    times = np.linspace(0.0, t_last, n_points)
    z = ratio + (z0 - ratio) * np.exp(beta * M * times)
    values = np.maximum(z, 0.0) ** (1 / beta)
    return FteSupersolution(t_star, times, values)


@dataclass
class FteDiagnostic:
    """Qualitative finite-time extinction prediction for v.

    C_tilde depends on an embedding constant that has no computable value; it
    is taken from the configuration and defaults to 1.
    """
    M: float
    C_tilde: float
    alpha: float
    Y: float
    predicted_extinction_time: Optional[float]

    @property
    def threshold(self) -> float:
        """Positive equilibrium (C_tilde/M)^(1/(1-alpha)) of the comparison ODE."""
        return (self.C_tilde / self.M) ** (1 / (1 - self.alpha))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["threshold"] = self.threshold if self.alpha < 1 else None
        return data


def fte_diagnostic(cfg: PdeConfig, v: Union[ProfileSpec, np.ndarray]) -> FteDiagnostic:
    """Comparison-ODE constants and predicted extinction time for the v field."""
    M = float(np.max(cfg.resource()))
    C_tilde = min(cfg.d2 * (1 - cfg.k), cfg.embedding_constant / cfg.k) if cfg.k > 0 else cfg.d2
    alpha = cfg.p / 2
    Y = l2_norm(_initial_field(v, cfg.x, "v"), cfg.dx)

    predicted = None
    if 0 < alpha < 1 and M > 0 and C_tilde > 0:
        predicted = fte_supersolution(Y, M, C_tilde, alpha, n_points=2).extinction_time
    return FteDiagnostic(M, C_tilde, alpha, Y, predicted)
