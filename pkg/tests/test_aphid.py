"""
Tests for the two-biotype aphid models.
"""

import numpy as np
import pytest

from ftem.aphid import (
    AphidModel,
    AphidParams,
    AphidState,
    peak_metrics,
    rhs_classic,
    rhs_harvested,
    simulate,
)
from ftem.exceptions import DomainError, ParameterError
from ftem.ode_sim import EventKind, Trajectory


@pytest.fixture
def params():
    return AphidParams(r=0.27, a=5e-6, k_f=0.001, k_r=0.01, R=30.0, p=0.5, q=0.5)


class TestAphidParams:
    """Tests for AphidParams and AphidState."""

    @pytest.mark.parametrize("overrides", [
        {"r": 0.0},
        {"k_r": 0.001},
        {"p": 1.0},
        {"q": 0.0},
        {"q": 1.5},
    ])
    def test_rejects_invalid(self, overrides):
        """Test rate, threshold and exponent validation."""
        settings = {"r": 0.27, "a": 5e-6, "k_f": 0.001, "k_r": 0.01, "R": 30.0}
        settings.update(overrides)

        with pytest.raises(ParameterError):
            AphidParams(**settings)

    def test_from_dict_defaults(self):
        """Test that p and q default to one half."""
        P = AphidParams.from_dict({"r": 0.27, "a": 5e-6, "k_f": 0.001, "k_r": 0.01, "R": 30.0})

        assert (P.p, P.q) == (0.5, 0.5)

    def test_state_rejects_negative(self):
        """Test that negative densities are refused."""
        with pytest.raises(DomainError):
            AphidState.from_sequence([0.0, -1.0, 1.0, 30.0])


class TestVectorFields:
    """Tests for rhs_classic and rhs_harvested."""

    def test_harvested_values(self, params):
        """Test the harvested field below the facilitation threshold."""
        dy = rhs_harvested((0.0, 15.0, 20.0, 30.0), params)

        assert dy == pytest.approx([1.75e-4, -2.025 - 0.5 * np.sqrt(15.0), 5.4, -6.6])

    def test_classic_without_aphids(self, params):
        """Test that with no aphids only xA moves, pulled down by resistance."""
        dy = rhs_classic((0.0, 0.0, 0.0, 30.0), params)

        assert dy == pytest.approx([0.0, -0.27 * 30.0, 0.0, 0.0])

    def test_facilitation_above_threshold(self, params):
        """Test that xA above R adds the facilitation term."""
        below = rhs_classic((0.0, 29.0, 0.0, 10.0), params)
        above = rhs_classic((0.0, 31.0, 0.0, 10.0), params)
        forced = rhs_classic((0.0, 29.0, 0.0, 10.0), params, facilitating=True)

        assert below[3] == 0.0
        assert above[3] == pytest.approx(-0.001 * 31.0 * 10.0)
        assert forced[3] == pytest.approx(-0.001 * 29.0 * 10.0)

    def test_q_one_is_classic(self, params):
        """Test that the harvested field with q = 1 is the classic field."""
        P = AphidParams(r=0.27, a=5e-6, k_f=0.001, k_r=0.01, R=30.0, p=0.5, q=1.0)
        rng = np.random.default_rng(3)
        for _ in range(50):
            s = rng.uniform(0.0, 60.0, 4) * np.array([0.01, 1.0, 1.0, 1.0])

            assert np.array_equal(rhs_harvested(s, P), rhs_classic(s, P))

    def test_harvested_rejects_negative(self, params):
        """Test that xA < 0 is outside the domain of the harvest term."""
        with pytest.raises(DomainError):
            rhs_harvested((0.0, -1.0, 0.0, 30.0), params)


class TestSimulate:
    """Tests for simulate."""

    def test_harvesting_eliminates_avirulent_biotype(self, params):
        """Test that harvesting drives xA extinct in finite time where the classic model does not."""
        classic = simulate(params, (0.0, 15.0, 20.0, 30.0), model=AphidModel.CLASSIC)
        harvested = simulate(params, (0.0, 15.0, 20.0, 30.0), model=AphidModel.HARVESTED)

        assert classic.extinction_time("xA") is None
        assert peak_metrics(classic)["xA"].value == pytest.approx(573.6, rel=1e-2)
        assert harvested.extinction_time("xA") == pytest.approx(14.7, abs=0.3)
        t_ext = harvested.extinction_time("xA")
        assert np.all(harvested.component("xA")[harvested.times > t_ext] == 0.0)

    def test_peaks_above_threshold(self, params):
        """Test peak sizes and times from a start above the facilitation threshold."""
        classic = simulate(params, (0.0, 50.0, 5.0, 30.0), model=AphidModel.CLASSIC)
        harvested = simulate(params, (0.0, 50.0, 5.0, 30.0), model=AphidModel.HARVESTED)
        peaks = peak_metrics(harvested)

        assert peak_metrics(classic)["xA"].value == pytest.approx(6319.0, rel=1e-2)
        assert peaks["xA"].value == pytest.approx(165.0, rel=1e-2)
        assert peaks["xA"].time == pytest.approx(26.18, abs=0.1)
        assert peaks["xV"].time == pytest.approx(32.35, abs=0.1)

    def test_switch_is_localized(self, params):
        """Test that the facilitation switch fires exactly at xA = R."""
        traj = simulate(params, (0.0, 50.0, 5.0, 30.0), model=AphidModel.HARVESTED)
        switches = [ev for ev in traj.events if ev.kind in (EventKind.SWITCH_ON, EventKind.SWITCH_OFF)]

        assert switches
        assert switches[0].kind == EventKind.SWITCH_OFF
        for event in switches:
            assert event.species == "xA"
            assert event.value_before == pytest.approx(params.R, abs=1e-6)

    @pytest.mark.parametrize("s0", [(0.0, 15.0, 20.0, 30.0), (0.0, 50.0, 5.0, 30.0)])
    def test_q_one_trajectory_is_classic(self, s0):
        """Test that the harvested model at q = 1 retraces the classic trajectory."""
        P = AphidParams(r=0.27, a=5e-6, k_f=0.001, k_r=0.01, R=30.0, p=0.5, q=1.0)
        classic = simulate(P, s0, model=AphidModel.CLASSIC)
        harvested = simulate(P, s0, model=AphidModel.HARVESTED)

        assert np.array_equal(harvested.times, classic.times)
        assert np.array_equal(harvested.states, classic.states)
        assert [ev.to_dict() for ev in harvested.events] == [ev.to_dict() for ev in classic.events]

    @pytest.mark.parametrize("model", [AphidModel.CLASSIC, AphidModel.HARVESTED])
    def test_monotone_components(self, params, model):
        """Test that h never decreases and A never increases."""
        traj = simulate(params, (0.0, 50.0, 5.0, 30.0), model=model)

        assert np.all(np.diff(traj.component("h")) >= -1e-12)
        assert np.all(np.diff(traj.component("A")) <= 1e-12)
        assert traj.times[-1] == pytest.approx(120.0)

    def test_single_biotype_first_integral(self, params):
        """Test x - (r h - h^2/2)/a along the single-biotype solution."""
        traj = simulate(params, (0.0, 10.0), model=AphidModel.SINGLE)
        h, x = traj.component("h"), traj.component("x")
        invariant = 10.0 + (params.r * h - h ** 2 / 2) / params.a

        assert traj.labels == ("h", "x")
        assert x == pytest.approx(invariant, rel=1e-4, abs=1e-2)
        assert peak_metrics(traj)["x"].value == pytest.approx(10.0 + params.r ** 2 / (2 * params.a), rel=1e-3)

    def test_single_biotype_shape(self, params):
        """Test that the single-biotype model takes two components."""
        with pytest.raises(DomainError):
            simulate(params, (0.0, 10.0, 0.0, 30.0), model=AphidModel.SINGLE)


class TestPeakMetrics:
    """Tests for peak_metrics."""

    def test_refines_between_samples(self):
        """Test that a sampled parabola peak is recovered exactly."""
        t = np.linspace(0.0, 2.0, 21)
        x = 5.0 - (t - 1.03) ** 2
        traj = Trajectory(t, np.column_stack([t, x]), labels=("h", "xA"))
        metric = peak_metrics(traj)["xA"]

        assert set(peak_metrics(traj)) == {"xA"}
        assert metric.value == pytest.approx(5.0)
        assert metric.time == pytest.approx(1.03)

    def test_endpoint_peak(self):
        """Test that a peak on the last sample is returned as is."""
        t = np.linspace(0.0, 1.0, 11)
        traj = Trajectory(t, np.column_stack([t, 2 * t]), labels=("h", "xV"))
        metric = peak_metrics(traj)["xV"]

        assert (metric.value, metric.time) == (2.0, 1.0)
