"""
Tests for the competition-diffusion solver and the extinction diagnostic.
"""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ftem.exceptions import DomainError, ParameterError, StabilityError
from ftem.pde_sim import (
    Outcome,
    PdeConfig,
    PdeRunResult,
    PdeState,
    fte_diagnostic,
    fte_supersolution,
    flux_v,
    leading_species,
    outcome,
    resolve_profile,
    run,
    step,
)


def bumpy_state(cfg: PdeConfig) -> PdeState:
    x = cfg.x
    return PdeState(0.0, 1.0 + 0.5 * x - 0.3 * x ** 2, 3.0 - x)


class TestProfiles:
    """Tests for resolve_profile."""

    def test_preset(self):
        """Test a named linear profile."""
        m = resolve_profile("linear:3-x")

        assert m(np.array([0.0, 1.0])) == pytest.approx([3.0, 2.0])

    def test_constant_broadcasts(self):
        """Test that a constant profile fills the grid."""
        assert resolve_profile(2.5)(np.zeros(4)) == pytest.approx([2.5] * 4)

    def test_unknown_preset(self):
        """Test that an unknown name is refused."""
        with pytest.raises(ParameterError):
            resolve_profile("sine")


class TestPdeConfig:
    """Tests for PdeConfig validation."""

    @pytest.mark.parametrize("overrides", [
        {"p": 1.0},
        {"p": 2.5},
        {"k": 1.5},
        {"d2": 0.0},
        {"scheme": "rk4"},
        {"n_cells": 1},
        {"m": [-1.0]},
        {"dt": -1e-3},
    ])
    def test_rejects_invalid(self, overrides):
        """Test each validated setting."""
        settings = {"d1": 1.0, "d2": 1.0, "k": 0.5, "p": 1.6}
        settings.update(overrides)

        with pytest.raises(ParameterError):
            PdeConfig(**settings)

    def test_cell_centres(self):
        """Test the grid layout."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=4)

        assert cfg.dx == 0.25
        assert cfg.x == pytest.approx([0.125, 0.375, 0.625, 0.875])

    def test_negative_initial_field(self):
        """Test that a negative initial profile is refused."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=8, t_end=0.1)

        with pytest.raises(DomainError):
            run(cfg, [-1.0], [1.0])


class TestFlux:
    """Tests for flux_v."""

    def test_zero_gradient(self):
        """Test that a flat field carries no flux."""
        assert flux_v(0.0, 1.0, 0.5, 1.6, 1e-8) == 0.0

    def test_linear_case(self):
        """Test that p = 2 reduces to an effective linear coefficient."""
        g = np.array([-2.0, 0.3, 5.0])

        assert flux_v(g, 0.7, 0.4, 2.0, 1e-8) == pytest.approx((0.7 * 0.6 + 0.4) * g)

    def test_fast_diffusion_is_odd(self):
        """Test that the regularized flux is odd in the gradient."""
        g = np.array([0.1, 1.0, 10.0])

        assert flux_v(-g, 1.0, 0.5, 1.6, 1e-8) == pytest.approx(-flux_v(g, 1.0, 0.5, 1.6, 1e-8))


class TestStep:
    """Tests for single time steps."""

    @pytest.mark.parametrize("scheme", ["explicit", "imex"])
    def test_mass_conserved_without_reactions(self, scheme):
        """Test that diffusion alone conserves both masses."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=32, scheme=scheme, reactions=False, dt_max=1e-3)
        state = bumpy_state(cfg)

        for _ in range(20):
            new = step(state, cfg)
            for before, after in ((state.u, new.u), (state.v, new.v)):
                mass_before = np.sum(before) * cfg.dx
                mass_after = np.sum(after) * cfg.dx
                assert abs(mass_after - mass_before) / mass_before < 1e-12
            state = new

    @pytest.mark.parametrize("scheme", ["explicit", "imex"])
    def test_constant_fields_stay_constant(self, scheme):
        """Test that flat fields are fixed points of diffusion."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=16, scheme=scheme, reactions=False)
        state = PdeState(0.0, np.full(16, 0.7), np.full(16, 0.2))
        new = step(state, cfg)

        assert new.u == pytest.approx(state.u, abs=1e-11)
        assert new.v == pytest.approx(state.v, abs=1e-11)

    def test_fixed_dt_above_limit(self):
        """Test that an unstable fixed explicit step is refused."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=2.0, n_cells=64, scheme="explicit", dt=0.1, t_end=1.0)

        with pytest.raises(StabilityError) as exc_info:
            run(cfg, [1.0], [1.0])

        assert exc_info.value.dt == 0.1
        assert exc_info.value.dt_max < 0.1


class TestRun:
    """Tests for full runs."""

    def test_homogeneous_run_matches_ode(self):
        """Test that spatially flat data follows the kinetic ODE."""
        cfg = PdeConfig(
            d1=1.0, d2=1.0, k=0.5, p=2.0, m=[1.0], n_cells=8,
            scheme="explicit", dt=1e-4, t_end=1.0,
        )
        result = run(cfg, [0.3], [0.2])

        def kinetics(_t, y):
            growth = 1.0 - y[0] - y[1]
            return [y[0] * growth, y[1] * growth]

        ode = solve_ivp(kinetics, (0.0, 1.0), [0.3, 0.2], method="DOP853", rtol=1e-12, atol=1e-14)
        assert result.final.t == pytest.approx(1.0)
        assert result.final.u == pytest.approx(np.full(8, ode.y[0, -1]), abs=1e-3)
        assert result.final.v == pytest.approx(np.full(8, ode.y[1, -1]), abs=1e-3)

    def test_effective_coefficient_at_p_two(self):
        """Test that p = 2 runs depend on d2 and k only through d2 (1 - k) + k."""
        common = {"d1": 1.0, "p": 2.0, "n_cells": 32, "dt": 1e-3, "t_end": 0.05}
        mixed = run(PdeConfig(d2=1.0, k=0.5, **common), [1.0, 0.5], [0.5, 0.0, 1.0])
        linear = run(PdeConfig(d2=1.0, k=0.0, **common), [1.0, 0.5], [0.5, 0.0, 1.0])

        assert mixed.final.v == pytest.approx(linear.final.v, rel=1e-12)
        assert mixed.final.u == pytest.approx(linear.final.u, rel=1e-12)

    def test_absent_u_means_v_wins(self):
        """Test that u identically zero is reported as extinct at once."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=16, t_end=1.0)
        result = run(cfg, [0.0], [1.0])

        assert result.extinct_species == "u"
        assert result.extinction_time == 0.0
        assert outcome(result) == Outcome.V_WINS

    def test_snapshots_land_on_schedule(self):
        """Test snapshot times and the tabular outputs."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=16, dt=1e-3, t_end=0.1, n_snapshots=11)
        result = run(cfg, [1.0], "linear:1.5-x")

        assert [snap.t for snap in result.snapshots] == pytest.approx(np.linspace(0.0, 0.1, 11))
        assert len(result.snapshots_frame()) == 11 * 16
        assert list(result.norms_frame().columns) == ["t", "l2_u", "l2_v", "sup_u", "sup_v"]
        assert result.steps == len(result.norms) - 1

    def test_grid_convergence(self):
        """Test that norm differences shrink as the grid is refined."""
        finals = []
        for n in (32, 64, 128):
            cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=2.0, n_cells=n, dt=1e-3, t_end=0.1)
            result = run(cfg, [1.0, 0.5], [0.5, 0.0, 1.0])
            finals.append(result.norms[-1][1:3])
        finals = np.array(finals)

        coarse = np.abs(finals[1] - finals[0])
        fine = np.abs(finals[2] - finals[1])
        assert np.all(fine < coarse)

    def test_diffusion_alone_never_grows_v(self):
        """Test that the L2 norm of v is nonincreasing with reactions off."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=32, reactions=False, t_end=0.5)
        l2_v = run(cfg, [1.0], "linear:1.5-x").norms_frame()["l2_v"].to_numpy()

        assert l2_v[-1] < l2_v[0]
        assert np.all(np.diff(l2_v) <= 1e-14)

    def test_small_v_decays_monotonically(self):
        """Test that v below half the extinction threshold shrinks every step."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, m=[1.0], n_cells=16, t_end=10.0, extinction_tol=1e-12)
        diag = fte_diagnostic(cfg, [0.01])
        assert diag.Y < diag.threshold / 2

        result = run(cfg, [2.0], [0.01])
        l2_v = result.norms_frame()["l2_v"].to_numpy()

        assert result.extinct_species is None
        assert l2_v[-1] < 0.6 * l2_v[0]
        assert np.all(np.diff(l2_v) <= 1e-15)


class TestLeadingSpecies:
    """Tests for leading_species."""

    @staticmethod
    def result_with(norms):
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=8)
        return PdeRunResult(config=cfg, x=cfg.x, norms=norms)

    def test_growing_share_leads(self):
        """Test that the species gaining share over the late window is reported."""
        rising_v = [(0.0, 1.0, 1.0, 1.0, 1.0), (1.0, 1.0, 1.1, 1.0, 1.1), (2.0, 0.9, 1.2, 0.9, 1.2)]
        rising_u = [(t, l2_v, l2_u, sup_v, sup_u) for t, l2_u, l2_v, sup_u, sup_v in rising_v]

        assert leading_species(self.result_with(rising_v)) == "v"
        assert leading_species(self.result_with(rising_u)) == "u"

    def test_no_drift_or_short_series(self):
        """Test that a frozen share or a single row has no leader."""
        frozen = [(0.0, 1.0, 2.0, 1.0, 2.0), (1.0, 0.5, 1.0, 0.5, 1.0)]

        assert leading_species(self.result_with(frozen), window=1.0) is None
        assert leading_species(self.result_with(frozen[:1])) is None

    def test_window_excludes_early_rows(self):
        """Test that drift before the window is ignored."""
        norms = [(0.0, 1.0, 0.1, 1.0, 0.1), (5.0, 1.0, 1.0, 1.0, 1.0), (10.0, 1.1, 1.0, 1.1, 1.0)]

        assert leading_species(self.result_with(norms)) == "u"
        assert leading_species(self.result_with(norms), window=1.0) == "v"


SLOW_DIFFUSER = {"d1": 0.2, "d2": 0.199, "k": 0.00099, "m": "linear:3-x", "n_cells": 512, "t_end": 200.0}
STEEP_RESOURCE = {"p": 2.0, "k": 0.0, "m": [0.5, 0.0, 10.0], "n_cells": 128, "dt_max": 0.02, "t_end": 2000.0}


@pytest.mark.slow
class TestSelection:
    """Tests for which competitor the diffusion law favours."""

    @pytest.mark.parametrize("p,ahead", [(2.0, "v"), (1.6, "u")])
    def test_fast_diffusion_flips_the_leader(self, p, ahead):
        """Test that v leads under linear diffusion and falls behind once p < 2."""
        result = run(PdeConfig(p=p, **SLOW_DIFFUSER), "linear:1.5-x", "linear:1.5-x")
        _, l2_u, l2_v, _, _ = result.norms[-1]

        assert result.final.t == pytest.approx(200.0)
        assert outcome(result) == Outcome.UNDECIDED
        if ahead == "v":
            assert l2_v > l2_u
        else:
            assert l2_u > l2_v

    @pytest.mark.parametrize("d1,d2,survivor", [(5.0, 0.05, "v"), (0.05, 5.0, "u")])
    def test_slower_diffuser_excludes_the_faster(self, d1, d2, survivor):
        """Test extinction of the faster diffuser on a strongly uneven resource."""
        cfg = PdeConfig(d1=d1, d2=d2, **STEEP_RESOURCE)
        result = run(cfg, [0.25, 0.0, 5.0], [0.25, 0.0, 5.0])

        assert outcome(result) == (Outcome.V_WINS if survivor == "v" else Outcome.U_WINS)
        assert result.extinct_species == ("u" if survivor == "v" else "v")
        assert result.extinction_time < cfg.t_end
        assert leading_species(result) == survivor

    def test_regularization_does_not_move_the_norms(self):
        """Test that eps_reg across four decades leaves the norms in place."""
        finals = []
        for eps in (1e-6, 1e-8, 1e-10):
            cfg = PdeConfig(p=1.6, eps_reg=eps, **dict(SLOW_DIFFUSER, n_cells=128, t_end=5.0))
            finals.append(run(cfg, "linear:1.5-x", "linear:1.5-x").norms[-1][1:3])

        assert finals[0] == pytest.approx(finals[1], rel=1e-4)
        assert finals[2] == pytest.approx(finals[1], rel=1e-4)


class TestSupersolution:
    """Tests for fte_supersolution and fte_diagnostic."""

    def test_known_extinction_time(self):
        """Test the closed form on M = 1, C = 2, alpha = 1/2, Y0 = 1."""
        sol = fte_supersolution(1.0, 1.0, 2.0, 0.5)

        assert sol.extinction_time == pytest.approx(2 * math.log(2), abs=1e-12)
        assert sol.values[0] == pytest.approx(1.0)
        assert sol.values[-1] < 1e-12

    def test_equilibrium_start_never_dies(self):
        """Test that a start on the comparison equilibrium has no extinction."""
        sol = fte_supersolution(4.0, 1.0, 2.0, 0.5)

        assert sol.extinction_time is None
        assert sol.values == pytest.approx(np.full(len(sol.values), 4.0))

    def test_matches_numerical_integration(self):
        """Test the closed form against DOP853 on 20 random triples."""
        rng = np.random.default_rng(7)
        for _ in range(20):
            M = rng.uniform(0.5, 2.0)
            C = rng.uniform(0.5, 3.0)
            alpha = rng.uniform(0.2, 0.9)
            Y0 = (rng.uniform(0.1, 0.9) * C / M) ** (1 / (1 - alpha))
            sol = fte_supersolution(Y0, M, C, alpha)
            t_check = sol.times[sol.times <= 0.9 * sol.extinction_time]

            ode = solve_ivp(
                lambda _t, y: M * y - C * np.maximum(y, 0.0) ** alpha,
                (0.0, t_check[-1]),
                [Y0],
                method="DOP853",
                t_eval=t_check,
                rtol=1e-12,
                atol=1e-14,
            )
            closed = sol.values[: len(t_check)]
            assert np.max(np.abs(ode.y[0] - closed)) < 1e-8 * max(1.0, Y0)

    @pytest.mark.parametrize("kwargs", [
        {"Y0": 1.0, "M": 0.0, "C_tilde": 1.0, "alpha": 0.5},
        {"Y0": 1.0, "M": 1.0, "C_tilde": 1.0, "alpha": 1.0},
    ])
    def test_rejects_invalid(self, kwargs):
        """Test parameter validation."""
        with pytest.raises(ParameterError):
            fte_supersolution(**kwargs)

    def test_diagnostic_constants(self):
        """Test M, C_tilde and alpha for a fast-diffusion config."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=512)
        diag = fte_diagnostic(cfg, [1e-5])

        assert diag.M == pytest.approx(3.0 - 0.5 / 512)
        assert diag.C_tilde == 0.5
        assert diag.alpha == pytest.approx(0.8)
        assert diag.Y == pytest.approx(1e-5)
        assert diag.Y < diag.threshold
        assert diag.predicted_extinction_time > 0

    def test_diagnostic_large_v_no_prediction(self):
        """Test that a v above the threshold gets no prediction."""
        cfg = PdeConfig(d1=1.0, d2=1.0, k=0.5, p=1.6, n_cells=64)

        assert fte_diagnostic(cfg, [1.0]).predicted_extinction_time is None

    def test_diagnostic_without_fast_term(self):
        """Test that k = 0 uses d2 as C_tilde."""
        cfg = PdeConfig(d1=1.0, d2=0.3, k=0.0, p=1.6, n_cells=64)

        assert fte_diagnostic(cfg, [1.0]).C_tilde == 0.3
