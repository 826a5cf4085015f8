"""
Tests for result serialization.
"""

import json
from enum import Enum

import numpy as np
import pandas as pd
import pytest

from ftem.exceptions import OutputError
from ftem.ode_sim import EventKind, Trajectory, TrajectoryEvent
from ftem.output import MANIFEST_NAME, ResultWriter, dumps, to_jsonable


class Colour(Enum):
    RED = "red"


@pytest.fixture
def trajectory():
    times = np.array([0.0, 0.5, 1.0])
    states = np.array([[0.3, 0.1], [0.35, 0.0], [0.38, 0.0]])
    event = TrajectoryEvent(0.25, "v", EventKind.EXTINCTION, 1e-10)
    return Trajectory(times, states, ("u", "v"), [event])


class TestToJsonable:
    """Tests for to_jsonable and dumps."""

    def test_numpy_values(self):
        """Test numpy scalars, arrays and non-finite floats."""
        data = to_jsonable({"a": np.float64(0.5), "b": np.arange(3), "c": np.inf, "d": np.bool_(True)})

        assert data == {"a": 0.5, "b": [0, 1, 2], "c": None, "d": True}

    def test_complex_and_enum(self):
        """Test complex numbers and enums."""
        assert to_jsonable([1 + 2j, Colour.RED]) == [{"re": 1.0, "im": 2.0}, "red"]

    def test_dumps_is_sorted(self):
        """Test key order and the trailing newline."""
        text = dumps({"b": 1, "a": 2})

        assert text.index('"a"') < text.index('"b"')
        assert text.endswith("}\n")


class TestResultWriter:
    """Tests for ResultWriter."""

    def test_csv_floats_round_trip(self, tmp_path):
        """Test that CSV floats keep 17 significant digits."""
        writer = ResultWriter(str(tmp_path))
        path = writer.write_frame("table", pd.DataFrame({"x": [0.1, 1.0 / 3.0]}))

        lines = open(path).read().splitlines()
        assert lines == ["x", "0.10000000000000001", "0.33333333333333331"]
        assert float(lines[2]) == 1.0 / 3.0

    def test_comments_follow_rows(self, tmp_path):
        """Test that comment lines come after the table."""
        writer = ResultWriter(str(tmp_path))
        path = writer.write_frame("table", pd.DataFrame({"x": [1.0]}), comments=["note"])

        assert open(path).read() == "x\n1\n# note\n"

    def test_trajectory_events(self, tmp_path, trajectory):
        """Test that trajectory events are written as comment lines."""
        writer = ResultWriter(str(tmp_path))
        text = open(writer.write_trajectory("trajectory_1", trajectory)).read()

        assert text.splitlines()[0] == "t,u,v"
        assert text.splitlines()[-1] == "# event,0.25,v,extinction"

    def test_json_format(self, tmp_path, trajectory):
        """Test the json format for tables and trajectories."""
        writer = ResultWriter(str(tmp_path), fmt="json")
        writer.write_frame("table", pd.DataFrame({"x": [1.5, None], "kind": ["a", "b"]}))
        writer.write_trajectory("trajectory_1", trajectory)

        records = json.loads((tmp_path / "table.json").read_text())
        assert records == [{"kind": "a", "x": 1.5}, {"kind": "b", "x": None}]
        traj = json.loads((tmp_path / "trajectory_1.json").read_text())
        assert traj["events"][0]["kind"] == "extinction"

    def test_manifest(self, tmp_path):
        """Test the manifest contents."""
        writer = ResultWriter(str(tmp_path))
        writer.write_json("b_result", {"value": 1})
        writer.write_json("a_result", {"value": 2})
        writer.write_manifest({"command": "equilibria"}, "abc123", "1.0.0", {"interior_count": 2})

        manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
        assert manifest["files"] == ["a_result.json", "b_result.json"]
        assert manifest["command"] == "equilibria"
        assert manifest["config_hash"] == "abc123"
        assert manifest["summary"] == {"interior_count": 2}
        assert "timestamp" not in manifest

    def test_deterministic(self, tmp_path, trajectory):
        """Test that identical results give identical bytes."""
        contents = []
        for name in ("one", "two"):
            writer = ResultWriter(str(tmp_path / name))
            writer.write_trajectory("trajectory_1", trajectory)
            writer.write_manifest({"command": "simulate"}, "h", "1.0.0", {"x": np.float64(0.1)})
            contents.append([(tmp_path / name / f).read_bytes() for f in ("trajectory_1.csv", MANIFEST_NAME)])

        assert contents[0] == contents[1]

    def test_unwritable_directory(self, tmp_path):
        """Test that a file in place of the directory is an OutputError."""
        blocker = tmp_path / "blocker"
        blocker.write_text("")

        with pytest.raises(OutputError) as exc_info:
            ResultWriter(str(blocker))

        assert exc_info.value.path == str(blocker)

    def test_unknown_format(self, tmp_path):
        """Test format validation."""
        with pytest.raises(OutputError):
            ResultWriter(str(tmp_path), fmt="xlsx")
