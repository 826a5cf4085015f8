"""
Bifurcations of the harvested competition system in the harvesting parameter q.

- saddle-node: two interior equilibria are born where phi(v_max(q); q) = 0
- boundary collision: the upper interior branch reaches E_v on the v axis
- boundary fold: the E_v pair is born where psi(v_phi(q); q) = 0

Sweeps over q evaluate full equilibrium reports concurrently.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .equilibria import (
    EquilibriumReport,
    full_report,
    phi,
    v_max,
    v_phi,
)
from .exceptions import BifurcationNotFoundError, ParameterError, SingularJacobianError
from .models import (
    CompetitionParams,
    State2,
    StateLike,
    hessians_modified,
    jacobian_modified,
    rhs_q_derivative,
)

logger = logging.getLogger(__name__)

Q_XTOL = 1e-12
RANK_TOL = 1e-8
# Largest q used when scanning toward the classical limit
Q_CEILING = 1.0 - 1e-9

SWEEP_SLOTS = 2


@dataclass
class SaddleNodeResult:
    """Location and transversality data of a saddle-node in q."""
    q_c: float
    E_max: State2
    lambda2: float
    det_J: float
    V: Tuple[float, float]
    W: Tuple[float, float]
    T1: float
    T2: float
    # phi(v_max) written in the closed form of the existence condition
    theorem_condition: float = 0.0

    @property
    def is_transversal(self) -> bool:
        return self.T1 != 0 and self.T2 != 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q_c": self.q_c,
            "E_max": self.E_max.to_dict(),
            "lambda2": self.lambda2,
            "det_J": self.det_J,
            "V": list(self.V),
            "W": list(self.W),
            "T1": self.T1,
            "T2": self.T2,
            "theorem_condition": self.theorem_condition,
            "transversal": self.is_transversal,
        }


@dataclass
class PitchforkResult:
    """Collision of the upper interior branch with the boundary equilibrium E_v."""
    q_star: float
    v_bar: float
    q_collision_closed_form: float
    q_theorem: float
    q_rederived: float
    q_boundary_fold: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "q_star": self.q_star,
            "v_bar": self.v_bar,
            "q_collision_closed_form": self.q_collision_closed_form,
            "q_theorem": self.q_theorem,
            "q_rederived": self.q_rederived,
            "q_boundary_fold": self.q_boundary_fold,
        }


@dataclass
class SweepRow:
    """One q value of a bifurcation sweep."""
    q: float
    report: Optional[EquilibriumReport] = None
    error: Optional[str] = None

    def to_row(self) -> Dict[str, Any]:
        """Wide row with a fixed set of columns for CSV output."""
        row: Dict[str, Any] = {"q": self.q}
        report = self.report
        row["n_interior"] = report.interior_count if report else None
        row["n_boundary_v"] = report.boundary_v_count if report else None
        for prefix, points in (
            ("interior", report.interior if report else []),
            ("boundary_v", report.boundary_v if report else []),
        ):
            for slot in range(SWEEP_SLOTS):
                pt = points[slot] if slot < len(points) else None
                row[f"{prefix}_{slot + 1}_u"] = pt.location.u if pt else None
                row[f"{prefix}_{slot + 1}_v"] = pt.location.v if pt else None
                row[f"{prefix}_{slot + 1}_stability"] = pt.stability.value if pt else None
        row["error"] = self.error
        return row


def _require_gap(P: CompetitionParams):
    if P.competition_gap <= 0:
        raise ParameterError(
            f"Saddle-node analysis requires b1*b2 - c1*c2 > 0, got {P.competition_gap}"
        )


def vmax_peak(P_base: CompetitionParams, q: float) -> float:
    """phi(v_max(q); q): positive when two interior roots exist."""
    P = P_base.with_q(q)
    return phi(v_max(P), P)


def sotomayor_check(
    P: CompetitionParams,
    E: StateLike,
    V: Optional[Sequence[float]] = None,
    W: Optional[Sequence[float]] = None,
    rank_tol: float = RANK_TOL,
) -> Tuple[float, float]:
    """Transversality scalars T1 = W.F_q and T2 = W.D2F(V, V).

    V and W default to the closed forms (c1, -b1) and (c2 v, -b1 u), which
    are right and left null vectors of J at any interior fold.
    """
    u, v = (float(x) for x in E)
    J = jacobian_modified((u, v), P)
    det = float(np.linalg.det(J))
    if abs(det) > rank_tol * max(1.0, float(np.sum(J * J))):
        raise SingularJacobianError(f"Jacobian is not rank-deficient at ({u:.6g}, {v:.6g}): det = {det:.3g}")

    V = np.asarray(V if V is not None else (P.c1, -P.b1), dtype=float)
    W = np.asarray(W if W is not None else (P.c2 * v, -P.b1 * u), dtype=float)

    T1 = float(W @ rhs_q_derivative((u, v), P))
    h1, h2 = hessians_modified((u, v), P)
    D2 = np.array([V @ h1 @ V, V @ h2 @ V])
    T2 = float(W @ D2)
    return T1, T2


def saddle_node_q(P_base: CompetitionParams, bracket: Tuple[float, float]) -> SaddleNodeResult:
    """Locate the saddle-node q_c inside ``bracket``."""
    _require_gap(P_base)
    q_lo, q_hi = bracket
    if not 0 < q_lo < q_hi < 1:
        raise ParameterError(f"Bracket must satisfy 0 < q_lo < q_hi < 1, got {bracket}", field="bracket")

    g_lo = vmax_peak(P_base, q_lo)
    g_hi = vmax_peak(P_base, q_hi)
    if np.sign(g_lo) == np.sign(g_hi):
        raise BifurcationNotFoundError(
            f"phi(v_max) has constant sign on [{q_lo}, {q_hi}]",
            code=BifurcationNotFoundError.NO_BIFURCATION,
        )

    q_c = brentq(lambda q: vmax_peak(P_base, q), q_lo, q_hi, xtol=Q_XTOL, maxiter=500)
    P = P_base.with_q(q_c)
    vm = v_max(P)
    um = (P.a1 - P.c1 * vm) / P.b1
    if um <= 0:
        raise BifurcationNotFoundError(
            f"Fold at q={q_c:.10f} lies outside the positive quadrant (u={um:.6g})",
            code=BifurcationNotFoundError.NO_BIFURCATION,
        )

    E_max = State2(um, vm)
    J = jacobian_modified(E_max, P)
    eigenvalues = np.linalg.eigvals(J)
    lambda2 = float(np.real(eigenvalues[np.argmax(np.abs(eigenvalues))]))
    V = (P.c1, -P.b1)
    W = (P.c2 * vm, -P.b1 * um)
    T1, T2 = sotomayor_check(P, E_max, V, W)

    theorem_condition = (P.a2 * P.b1 * q_c - P.c2 * P.a1) - vm * P.competition_gap * (2 - P.p) / (1 - P.p)
    logger.info(f"Saddle-node at q_c={q_c:.10f}, E_max=({um:.6f}, {vm:.6f}), T1={T1:.4g}, T2={T2:.4g}")

    return SaddleNodeResult(
        q_c=q_c,
        E_max=E_max,
        lambda2=lambda2,
        det_J=float(np.linalg.det(J)),
        V=V,
        W=W,
        T1=T1,
        T2=T2,
        theorem_condition=theorem_condition,
    )


def _upper_branch_u(P_base: CompetitionParams, q: float) -> Optional[float]:
    """u-coordinate of the largest root of phi, or None when no root pair exists."""
    P = P_base.with_q(q)
    vm = v_max(P)
    f = lambda v: phi(v, P)
    if f(vm) <= 0:
        return None
    hi = max(P.a2 / P.b2, 2 * vm)
    while f(hi) > 0:
        hi *= 2
    v_up = brentq(f, vm, hi, xtol=1e-14, maxiter=500)
    return (P.a1 - P.c1 * v_up) / P.b1


def boundary_fold_q(P_base: CompetitionParams, q_range: Tuple[float, float] = (1e-6, Q_CEILING)) -> Optional[float]:
    """q at which psi(v_phi) = 0, i.e. where the pair of E_v equilibria is born."""
    def fold(q: float) -> float:
        P = P_base.with_q(q)
        return P.a2 * q - P.b2 * v_phi(P) * (2 - P.p) / (1 - P.p)

    grid = np.linspace(q_range[0], q_range[1], 401)
    values = [fold(q) for q in grid]
    for i in range(len(grid) - 1):
        if values[i] == 0:
            return float(grid[i])
        if values[i] * values[i + 1] < 0:
            return float(brentq(fold, grid[i], grid[i + 1], xtol=Q_XTOL))
    return None


def collision_closed_forms(P_base: CompetitionParams) -> Dict[str, float]:
    """Closed-form estimates of the collision q at v_bar = a1/c1."""
    P = P_base
    v_bar = P.a1 / P.c1
    power = v_bar ** (P.p - 1)
    gap = P.competition_gap
    return {
        "v_bar": v_bar,
        "exact": (P.b2 * v_bar + power) / (P.a2 + power),
        "theorem": (v_bar / P.a2) * (P.c2 * gap / (1 - P.p) + P.b2),
        "rederived": (v_bar / P.a2) * (P.b2 + gap / (P.b1 * (1 - P.p))),
    }


def pitchfork_q(
    P_base: CompetitionParams,
    q_range: Tuple[float, float] = (0.5, Q_CEILING),
    n_scan: int = 400,
) -> PitchforkResult:
    """Locate the q where the upper interior equilibrium reaches the v axis.

    The signed distance is the u-coordinate of the largest root of phi; it is
    scanned on a grid and the first sign change is polished by bisection.
    """
    _require_gap(P_base)
    grid = np.linspace(q_range[0], q_range[1], n_scan + 1)
    samples: List[Tuple[float, float]] = []
    for q in grid:
        u = _upper_branch_u(P_base, float(q))
        if u is not None:
            samples.append((float(q), u))

    bracket = None
    for (q0, u0), (q1, u1) in zip(samples, samples[1:]):
        if u0 == 0:
            bracket = (q0, q0)
            break
        if u0 * u1 < 0 and np.isclose(q1 - q0, grid[1] - grid[0]):
            bracket = (q0, q1)
            break

    if bracket is None:
        raise BifurcationNotFoundError(
            f"No collision of an interior branch with E_v for q in {q_range}",
            code=BifurcationNotFoundError.NOT_FOUND,
        )

    if bracket[0] == bracket[1]:
        q_star = bracket[0]
    else:
        q_star = float(brentq(lambda q: _upper_branch_u(P_base, q), bracket[0], bracket[1], xtol=Q_XTOL))

    forms = collision_closed_forms(P_base)
    fold = boundary_fold_q(P_base)
    logger.info(f"Boundary collision at q*={q_star:.10f} (closed form {forms['exact']:.10f})")
    return PitchforkResult(
        q_star=q_star,
        v_bar=forms["v_bar"],
        q_collision_closed_form=forms["exact"],
        q_theorem=forms["theorem"],
        q_rederived=forms["rederived"],
        q_boundary_fold=fold,
    )


def _evaluate_row(P_base: CompetitionParams, q: float) -> SweepRow:
    return SweepRow(q=q, report=full_report(P_base.with_q(q)))


def sweep_q(
    P_base: CompetitionParams,
    q_grid: Sequence[float],
    jobs: int = 1,
    on_progress: Optional[Callable[[int, int], None]] = None,
) -> List[SweepRow]:
    """Equilibrium report for every q in ``q_grid``.

    Rows are independent; with jobs > 1 they are evaluated on a thread pool.
    A failing row keeps its error message and the sweep continues.
    """
    q_values = [float(q) for q in q_grid]
    if any(not 0 < q <= 1 for q in q_values):
        raise ParameterError("Every q in the grid must lie in (0, 1]", field="q_grid")
    if any(b <= a for a, b in zip(q_values, q_values[1:])):
        raise ParameterError("q grid must be strictly increasing", field="q_grid")

    rows: Dict[int, SweepRow] = {}
    total = len(q_values)
    completed = 0

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        future_to_index = {
            executor.submit(_evaluate_row, P_base, q): idx
            for idx, q in enumerate(q_values)
        }
        for future in as_completed(future_to_index):
            idx = future_to_index[future]
            completed += 1
            try:
                rows[idx] = future.result()
            except Exception as e:
                logger.error(f"Sweep row q={q_values[idx]} failed: {e}")
                rows[idx] = SweepRow(q=q_values[idx], error=str(e))
            if on_progress:
                on_progress(completed, total)

    return [rows[idx] for idx in range(total)]


def count_changes(rows: Sequence[SweepRow]) -> List[Tuple[float, float, int, int]]:
    """Adjacent row pairs whose interior counts differ: (q0, q1, n0, n1)."""
    changes = []
    good = [row for row in rows if row.report is not None]
    for a, b in zip(good, good[1:]):
        if a.report.interior_count != b.report.interior_count:
            changes.append((a.q, b.q, a.report.interior_count, b.report.interior_count))
    return changes


def interior_count(P_base: CompetitionParams, q: float) -> int:
    return full_report(P_base.with_q(q)).interior_count
