"""
Dispatch of a run configuration to the numerical modules.

The runner executes one command, writes its files through a ResultWriter and
returns a RunResult. Failures are mapped to exit codes rather than raised so
that batch scripts can keep going.
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from . import __version__
from .aphid import AphidModel, peak_metrics, simulate
from .bifurcation import (
    Q_CEILING,
    boundary_fold_q,
    collision_closed_forms,
    count_changes,
    interior_count,
    pitchfork_q,
    saddle_node_q,
    sweep_q,
)
from .config import RunConfig
from .equilibria import EquilibriumReport, Stability, full_report
from .exceptions import (
    BifurcationNotFoundError,
    ConfigurationError,
    FtemError,
    NumericalError,
    ParameterError,
)
from .models import classify_classical_regime
from .ode_sim import attractor_of, basin_scan, integrate, phase_portrait, separatrix
from .output import ResultWriter
from .pde_sim import fte_diagnostic, leading_species, outcome, run as run_pde

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, (ConfigurationError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_FAILURE


@dataclass
class RunResult:
    """Result of one command run."""
    success: bool
    command: str
    files: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)
    exit_code: int = EXIT_OK
    duration_seconds: float = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "success": self.success,
            "command": self.command,
            "files": self.files,
            "summary": self.summary,
            "errors": self.errors,
            "exit_code": self.exit_code,
            "duration_seconds": self.duration_seconds,
        }


def _points_frame(report: EquilibriumReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "u": pt.location.u,
                "v": pt.location.v,
                "kind": pt.kind.value,
                "stability": pt.stability.value,
            }
            for pt in report.points
        ],
        columns=["u", "v", "kind", "stability"],
    )


class Runner:
    """Runs one configured command and writes its outputs."""

    def __init__(
        self,
        config: RunConfig,
        fmt: str = "csv",
        on_progress: Optional[Callable[[int, int], None]] = None,
    ):
        self.config = config
        self.fmt = fmt
        self._on_progress = on_progress
        self._handlers = {
            "equilibria": self._equilibria,
            "classify": self._classify,
            "sweep-q": self._sweep_q,
            "saddle-node": self._saddle_node,
            "pitchfork": self._pitchfork,
            "simulate": self._simulate,
            "phase-portrait": self._phase_portrait,
            "separatrix": self._separatrix,
            "pde-run": self._pde_run,
            "aphid": self._aphid,
        }

    def run(self) -> RunResult:
        start_time = time.monotonic()
        result = RunResult(success=False, command=self.config.command)

        try:
            writer = ResultWriter(self.config.output_dir, self.fmt)
            logger.info(f"Running {self.config.command} (config {self.config.config_hash()})")
            result.summary = self._handlers[self.config.command](writer, result)
            writer.write_manifest(self.config.to_dict(), self.config.config_hash(), __version__, result.summary)
            result.files = list(writer.files)
            result.success = not result.errors
            result.exit_code = EXIT_OK if result.success else EXIT_NUMERICAL
        except FtemError as e:
            logger.error(f"{self.config.command} failed: {e}")
            result.errors.append(str(e))
            result.exit_code = exit_code_for(e)
        except Exception as e:
            logger.exception(f"Unexpected error in {self.config.command}: {e}")
            result.errors.append(f"Unexpected error: {e}")
            result.exit_code = EXIT_FAILURE

        result.duration_seconds = time.monotonic() - start_time
        return result

    def _equilibria(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        report = full_report(self.config.params.to_params())
        writer.write_json("equilibria", report.to_dict())
        writer.write_frame("equilibrium_points", _points_frame(report))
        return {
            "interior_count": report.interior_count,
            "boundary_v_count": report.boundary_v_count,
            "boundary_count": sum(1 for pt in report.points if pt.kind.value.startswith("boundary")),
            "warnings": report.warnings,
        }

    def _classify(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        P = self.config.params.to_params()
        report = full_report(P)
        regime = classify_classical_regime(P.with_q(1.0))
        writer.write_json("classification", {
            "classical_regime": regime.value,
            "points": [pt.to_dict() for pt in report.points],
        })
        return {
            "classical_regime": regime.value,
            "stable_points": [
                pt.location.to_dict()
                for pt in report.points
                if pt.stability in (Stability.STABLE_NODE, Stability.FINITE_TIME_ATTRACTOR)
            ],
        }

    def _sweep_q(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        rows = sweep_q(cfg.to_params(), cfg.q_grid(), jobs=self.config.jobs, on_progress=self._on_progress)
        writer.write_frame("sweep_q", pd.DataFrame([row.to_row() for row in rows]))
        for row in rows:
            if row.error:
                result.errors.append(f"q={row.q!r}: {row.error}")
        return {
            "rows": len(rows),
            "failed_rows": sum(1 for row in rows if row.error),
            "count_changes": [
                {"q_lo": a, "q_hi": b, "from": n0, "to": n1} for a, b, n0, n1 in count_changes(rows)
            ],
        }

    def _saddle_node(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        bracket = cfg.q_bracket or [cfg.q_min, min(cfg.q_max, Q_CEILING)]
        P = cfg.to_params()
        sn = saddle_node_q(P, (bracket[0], min(bracket[1], Q_CEILING)))
        summary = sn.to_dict()
        summary["interior_count_below"] = interior_count(P, max(sn.q_c - 1e-3, 1e-9))
        summary["interior_count_above"] = interior_count(P, min(sn.q_c + 1e-3, 1.0))
        writer.write_json("saddle_node", summary)
        return summary

    def _pitchfork(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        P = cfg.to_params()
        q_range = tuple(cfg.pitchfork_range) if cfg.pitchfork_range else (0.5, Q_CEILING)
        try:
            summary = pitchfork_q(P, (q_range[0], min(q_range[1], Q_CEILING))).to_dict()
            summary["status"] = "FOUND"
        except BifurcationNotFoundError as e:
            logger.warning(f"{e}; reporting closed forms and the boundary fold only")
            forms = collision_closed_forms(P)
            summary = {
                "status": e.code,
                "q_star": None,
                "v_bar": forms["v_bar"],
                "q_collision_closed_form": forms["exact"],
                "q_theorem": forms["theorem"],
                "q_rederived": forms["rederived"],
                "q_boundary_fold": boundary_fold_q(P),
            }
        writer.write_json("pitchfork", summary)
        return summary

    def _simulate(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        P = cfg.to_params()
        opts = cfg.integrator_options()
        report = full_report(P)

        trajectories = []
        for idx, s0 in enumerate(cfg.initial_states, 1):
            traj = integrate(P, s0, opts)
            writer.write_trajectory(f"trajectory_{idx}", traj)
            trajectories.append({
                "s0": list(s0),
                "final_state": traj.final_state.tolist(),
                "attractor": attractor_of(traj.final_state, report).value,
                "v_extinction_time": traj.extinction_time("v"),
            })

        summary: Dict[str, Any] = {"trajectories": trajectories}
        if cfg.basin_samples > 0:
            saddles = [pt for pt in report.interior if pt.stability == Stability.SADDLE]
            sep = separatrix(P, saddles[0].location, opts=opts) if saddles else None
            samples = basin_scan(
                P, cfg.basin_samples, seed=self.config.seed, opts=opts,
                jobs=self.config.jobs, sep=sep, on_progress=self._on_progress,
            )
            writer.write_frame("basin_scan", pd.DataFrame([s.to_dict() for s in samples]))
            summary["basin_counts"] = dict(sorted(Counter(s.attractor.value for s in samples).items()))
            for s in samples:
                if s.error:
                    result.errors.append(f"basin start ({s.u0!r}, {s.v0!r}): {s.error}")
        return summary

    def _phase_portrait(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        portrait = phase_portrait(cfg.to_params(), cfg.grid(), cfg.integrator_options())
        for name, frame in portrait.to_frames().items():
            writer.write_frame(name, frame)
        return {
            "interior_count": portrait.report.interior_count,
            "separatrices": len(portrait.separatrices),
            "trajectories": len(portrait.trajectories),
        }

    def _separatrix(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        P = cfg.to_params()
        if cfg.saddle is not None:
            saddles = [tuple(cfg.saddle)]
        else:
            saddles = [
                tuple(pt.location) for pt in full_report(P).interior if pt.stability == Stability.SADDLE
            ]
        if not saddles:
            raise NumericalError("No interior saddle to trace a separatrix from")

        traced = []
        for idx, saddle in enumerate(saddles, 1):
            sep = separatrix(P, saddle, arc_len=cfg.arc_len, eps_scale=cfg.eps_scale, t_max=cfg.t_max)
            writer.write_frame(f"separatrix_{idx}", sep.to_frame())
            traced.append({
                "saddle": sep.saddle.to_dict(),
                "eigenvalues": list(sep.eigenvalues),
                "stable_vector": sep.stable_vector.tolist(),
                "termination": list(sep.termination),
                "points": len(sep.points),
            })
        return {"separatrices": traced}

    def _pde_run(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        pde_cfg = cfg.to_pde_config()
        run_result = run_pde(pde_cfg, cfg.u0, cfg.v0)
        writer.write_frame("snapshots", run_result.snapshots_frame())
        writer.write_frame("norms", run_result.norms_frame())
        diagnostic = fte_diagnostic(pde_cfg, cfg.v0)
        summary = {
            "outcome": outcome(run_result, pde_cfg.extinction_tol).value,
            "leading_species": leading_species(run_result),
            "extinct_species": run_result.extinct_species,
            "extinction_time": run_result.extinction_time,
            "final_time": run_result.final.t,
            "steps": run_result.steps,
            "fte_diagnostic": diagnostic.to_dict(),
        }
        writer.write_json("pde_summary", summary)
        return summary

    def _aphid(self, writer: ResultWriter, result: RunResult) -> Dict[str, Any]:
        cfg = self.config.params
        P = cfg.to_params()
        h0, xA0, xV0, _ = cfg.s0

        runs = {}
        for model in cfg.model_tags():
            s0 = (h0, xA0 + xV0) if model == AphidModel.SINGLE else cfg.s0
            traj = simulate(P, s0, t_end=cfg.t_end, model=model)
            writer.write_trajectory(f"aphid_{model.value}", traj)
            runs[model.value] = {
                "peaks": {name: metric.to_dict() for name, metric in peak_metrics(traj).items()},
                "final_state": dict(zip(traj.labels, np.asarray(traj.final_state).tolist())),
                "extinction_times": {
                    event.species: event.time for event in traj.events if event.kind.value == "extinction"
                },
            }
        return {"runs": runs}
