"""
Tests for configuration handling.
"""

import json
import os
import tempfile

import pytest

from ftem.config import (
    COMMAND_BLOCKS,
    CompetitionConfig,
    PdeRunConfig,
    RunConfig,
    SimulateConfig,
    parse_config,
    template_config,
)
from ftem.exceptions import ConfigurationError


def competition_doc(**params):
    base = {"a1": 0.4, "a2": 0.7, "b1": 1.0, "b2": 1.0, "c1": 0.6, "c2": 0.8, "p": 0.6, "q": 0.91}
    base.update(params)
    return base


def config_errors(document) -> list:
    with pytest.raises(ConfigurationError) as exc_info:
        parse_config(json.dumps(document))
    return exc_info.value.errors


class TestParseConfig:
    """Tests for parse_config."""

    def test_equilibria(self):
        """Test a minimal equilibria config."""
        config = parse_config(json.dumps({"command": "equilibria", "params": competition_doc()}))

        assert isinstance(config.params, CompetitionConfig)
        assert config.params.to_params().q == 0.91
        assert config.output_dir == "./ftem_output"
        assert config.jobs == 1

    def test_simulate_defaults(self):
        """Test the integrator and initial-state defaults of simulate."""
        config = parse_config(json.dumps({"command": "simulate", "params": competition_doc()}))

        assert isinstance(config.params, SimulateConfig)
        assert config.params.initial_states == [[0.2, 0.2]]
        assert config.params.integrator_options().t_end == 500.0

    def test_ode_rejects_fast_diffusion_exponent(self):
        """Test that p > 1 is refused for ODE commands."""
        errors = config_errors({"command": "simulate", "params": competition_doc(p=1.6)})

        assert any(e.startswith("params.p:") for e in errors)

    def test_pde_accepts_fast_diffusion_exponent(self):
        """Test that the PDE block takes 1 < p <= 2."""
        document = {"command": "pde-run", "params": {"d1": 0.2, "d2": 0.199, "k": 0.00099, "p": 1.6}}
        config = parse_config(json.dumps(document))

        assert isinstance(config.params, PdeRunConfig)
        assert config.params.to_pde_config().p == 1.6

    def test_reports_every_schema_problem(self):
        """Test unknown and missing fields with their dotted paths."""
        params = competition_doc(extra=1.0)
        del params["a1"]
        errors = config_errors({"command": "equilibria", "params": params})

        assert "params.extra: unknown field" in errors
        assert "params.a1: required field is missing" in errors

    def test_unknown_top_level_field(self):
        """Test that stray top-level keys are reported."""
        errors = config_errors({"command": "equilibria", "params": competition_doc(), "verbose": True})

        assert "verbose: unknown field" in errors

    def test_unknown_command(self):
        """Test that an unknown command is refused."""
        errors = config_errors({"command": "bifurcate", "params": {}})

        assert errors[0].startswith("command: unknown command 'bifurcate'")

    def test_invalid_rate(self):
        """Test that a model invariant error names its field."""
        errors = config_errors({"command": "equilibria", "params": competition_doc(b2=-1.0)})

        assert errors[0].startswith("params.b2:")

    def test_non_numeric_string(self):
        """Test that text in a numeric field is reported."""
        errors = config_errors({"command": "equilibria", "params": competition_doc(a1="lots")})

        assert errors == ["params.a1: expected a number, got 'lots'"]

    def test_list_in_numeric_field(self):
        """Test that a list where a number belongs is a schema error."""
        errors = config_errors({"command": "sweep-q", "params": competition_doc(p=[0.6])})

        assert errors == ["params.p: expected number, got list"]

    def test_text_in_integer_field(self):
        """Test that an integer field refuses text."""
        errors = config_errors({"command": "sweep-q", "params": competition_doc(n_q="many")})

        assert errors == ["params.n_q: expected integer, got str"]

    def test_nested_list_types(self):
        """Test element types inside list fields."""
        errors = config_errors({
            "command": "simulate",
            "params": competition_doc(initial_states=[[0.2, "low"]], basin_samples=2.5),
        })

        assert "params.initial_states: expected list of list of number, got list" in errors
        assert "params.basin_samples: expected integer, got float" in errors

    def test_optional_field_accepts_null(self):
        """Test that null is fine for optional fields and refused for required numbers."""
        config = parse_config(json.dumps({"command": "saddle-node", "params": competition_doc(q_bracket=None)}))

        assert config.params.q_bracket is None
        assert config_errors({"command": "equilibria", "params": competition_doc(q=None)}) == [
            "params.q: expected number, got NoneType"
        ]

    def test_boolean_is_not_a_number(self):
        """Test that booleans are kept out of numeric fields."""
        errors = config_errors({"command": "equilibria", "params": competition_doc(a1=True)})

        assert errors == ["params.a1: expected number, got bool"]

    def test_output_dir_must_be_text(self):
        """Test top-level type validation of the output directory."""
        errors = config_errors({"command": "equilibria", "params": competition_doc(), "output_dir": ["out"]})

        assert "output_dir: must be a string" in errors

    def test_yaml_exponent_literals(self):
        """Test that YAML exponent literals are read as floats."""
        text = """
command: simulate
params:
  a1: 0.4
  a2: 0.7
  b1: 1
  b2: 1
  c1: 0.6
  c2: 0.8
  p: 0.6
  q: 0.91
  abs_tol: 1e-8
  extinction_threshold: 1e-10
"""
        config = parse_config(text)

        assert config.params.abs_tol == 1e-8
        assert config.params.integrator_options().extinction_threshold == 1e-10

    def test_invalid_jobs_and_log_level(self):
        """Test top-level validation."""
        errors = config_errors({
            "command": "equilibria", "params": competition_doc(), "jobs": 0, "log_level": "loud",
        })

        assert "jobs: must be a positive integer" in errors
        assert any(e.startswith("log_level:") for e in errors)

    def test_log_level_is_normalized(self):
        """Test that lowercase levels are accepted."""
        config = parse_config(json.dumps({
            "command": "equilibria", "params": competition_doc(), "log_level": "debug",
        }))

        assert config.log_level == "DEBUG"

    def test_bad_pde_profile(self):
        """Test that an unknown initial profile is reported."""
        document = {"command": "pde-run", "params": {"d1": 0.2, "d2": 0.2, "k": 0.5, "p": 1.6, "u0": "sine"}}

        assert config_errors(document)[0].startswith("params.u0:")

    def test_unknown_aphid_model(self):
        """Test aphid model name validation."""
        document = {"command": "aphid", "params": dict(template_config("aphid")["params"], models=["spotted"])}

        assert any("unknown model 'spotted'" in e for e in config_errors(document))


class TestRunConfig:
    """Tests for RunConfig."""

    def test_json_round_trip(self):
        """Test that to_json parses back to the same config."""
        config = parse_config(json.dumps({"command": "simulate", "params": competition_doc(), "seed": 4}))

        assert parse_config(config.to_json()).to_dict() == config.to_dict()

    def test_hash_ignores_key_order(self):
        """Test that the hash depends on content only."""
        params = competition_doc()
        reordered = dict(reversed(list(params.items())))
        a = parse_config(json.dumps({"command": "equilibria", "params": params}))
        b = parse_config(json.dumps({"params": reordered, "command": "equilibria"}))

        assert a.config_hash() == b.config_hash()
        assert len(a.config_hash()) == 32

    def test_hash_changes_with_parameters(self):
        """Test that changing a parameter changes the hash."""
        a = parse_config(json.dumps({"command": "equilibria", "params": competition_doc()}))
        b = parse_config(json.dumps({"command": "equilibria", "params": competition_doc(q=0.92)}))

        assert a.config_hash() != b.config_hash()

    def test_from_file(self):
        """Test loading a config from disk."""
        with tempfile.NamedTemporaryFile(mode="w", suffix=".json", delete=False) as f:
            json.dump({"command": "classify", "params": competition_doc(q=1.0)}, f)
            f.flush()

            try:
                config = RunConfig.from_file(f.name)
                assert config.command == "classify"
                assert config.is_valid()
            finally:
                os.unlink(f.name)

    def test_from_file_not_found(self):
        """Test loading a missing file."""
        with pytest.raises(ConfigurationError):
            RunConfig.from_file("/nonexistent/ftem.json")

    def test_from_file_with_env(self, monkeypatch, tmp_path):
        """Test environment overrides of the output directory and log level."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"command": "equilibria", "params": competition_doc()}))
        monkeypatch.setenv("FTEM_OUTPUT_DIR", str(tmp_path / "out"))
        monkeypatch.setenv("FTEM_LOG_LEVEL", "warning")

        config = RunConfig.from_file_with_env(str(path))

        assert config.output_dir == str(tmp_path / "out")
        assert config.log_level == "WARNING"


class TestTemplates:
    """Tests for template_config."""

    @pytest.mark.parametrize("command", sorted(COMMAND_BLOCKS))
    def test_every_template_is_valid(self, command):
        """Test that each command's template parses without errors."""
        config = parse_config(json.dumps(template_config(command, output_dir="./out")))

        assert config.command == command
        assert config.output_dir == "./out"

    def test_unknown_template(self):
        """Test that an unknown command has no template."""
        with pytest.raises(ConfigurationError):
            template_config("bifurcate")
