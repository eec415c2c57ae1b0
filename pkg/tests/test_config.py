"""
Tests for solver configuration management.
"""

import pytest
import tempfile
import yaml
from pathlib import Path

import numpy as np

from src.config import DEFAULT_ALPHA, DEFAULT_LAYERS, SolverConfig
from src.errors import DomainError, ParseError, ValidationError
from src.stepsize import BarzilaiBorweinStep, ConstantStep


class TestSolverConfig:
    """Test the SolverConfig class."""

    def test_init_with_defaults(self):
        """Test configuration initialization with default values."""
        config = SolverConfig()

        assert config.layers == DEFAULT_LAYERS
        assert config.alpha == DEFAULT_ALPHA
        assert config.step_rule == ConstantStep(0.01)
        assert config.early_stopping
        assert config.validate() == []

    def test_step_rule_from_string(self):
        """Step rules given as strings are parsed."""
        config = SolverConfig(step_rule="bb:0.05")
        assert config.step_rule == BarzilaiBorweinStep(0.05)

    def test_initial_point(self):
        """alpha * 1 unless an explicit init is given."""
        assert list(SolverConfig(alpha=0.5).initial_point(3)) == [0.5, 0.5, 0.5]
        config = SolverConfig(init=[0.1, 0.2])
        assert list(config.initial_point(2)) == [0.1, 0.2]
        with pytest.raises(DomainError):
            config.initial_point(3)

    def test_resolve_batch_size(self):
        """Batch size defaults to ceil(M / 10) and may not exceed M."""
        assert SolverConfig().resolve_batch_size(30) == 3
        assert SolverConfig().resolve_batch_size(31) == 4
        assert SolverConfig().resolve_batch_size(5) == 1
        assert SolverConfig(batch_size=7).resolve_batch_size(10) == 7
        with pytest.raises(DomainError):
            SolverConfig(batch_size=11).resolve_batch_size(10)

    def test_validate_reports_issues(self):
        """Every invalid field is reported."""
        config = SolverConfig(layers=1, alpha=-1.0, max_iters=0, trace_every=0, grad_tol=0.0)
        issues = config.validate()
        assert len(issues) == 5
        assert any("layers" in issue for issue in issues)
        with pytest.raises(ValidationError) as excinfo:
            config.validate_strict()
        assert excinfo.value.issues == issues

    def test_validate_init(self):
        """Explicit inits must be strictly positive."""
        assert SolverConfig(init=[1.0, 0.0]).validate() == ["init must be strictly positive"]

    def test_to_dict(self):
        """Test converting configuration to dictionary."""
        config = SolverConfig(layers=2, init=np.array([0.5, 0.25]), step_rule="lipschitz:10")
        data = config.to_dict()

        assert data["layers"] == 2
        assert data["init"] == [0.5, 0.25]
        assert data["step_rule"] == "lipschitz:10"
        assert data["batch_size"] is None

    def test_from_dict(self):
        """Test creating configuration from dictionary."""
        config = SolverConfig.from_dict({"layers": 4, "alpha": 0.001, "step_rule": "nesterov:0.02"})
        assert config.layers == 4
        assert config.alpha == 0.001
        assert config.step_rule.kind == "nesterov"

    def test_from_dict_unknown_key(self):
        """Unknown keys are rejected."""
        with pytest.raises(ValidationError):
            SolverConfig.from_dict({"layers": 2, "momentum": 0.9})

    def test_save_and_load(self):
        """Test saving and loading configuration."""
        with tempfile.TemporaryDirectory() as tmpdir:
            config_file = Path(tmpdir) / "solver" / "config.yaml"
            config = SolverConfig(layers=2, alpha=1e-3, step_rule="bb:0.02", batch_size=4,
                                  target_residual=1e-3, init=[0.3, 0.4])
            config.save(config_file)

            assert config_file.exists()
            loaded = SolverConfig.from_file(config_file)
            assert loaded.to_dict() == config.to_dict()
            assert yaml.safe_load(config_file.read_text())["step_rule"] == "bb:0.02"

    def test_from_file_missing(self):
        """A missing file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            SolverConfig.from_file("/nonexistent/config.yaml")

    def test_from_file_malformed(self):
        """Malformed YAML raises ParseError with a line."""
        with tempfile.TemporaryDirectory() as tmpdir:
            config_file = Path(tmpdir) / "config.yaml"
            config_file.write_text("layers: 2\nalpha: [1\n")
            with pytest.raises(ParseError) as excinfo:
                SolverConfig.from_file(config_file)
            assert excinfo.value.line is not None

    def test_config_hash(self):
        """Test configuration hash generation."""
        config1 = SolverConfig(layers=3)
        config2 = SolverConfig(layers=3)

        # Same configuration should have same hash
        assert config1.config_hash() == config2.config_hash()
        assert len(config1.config_hash()) == 8

        # Different configuration should have different hash
        config2.layers = 2
        assert config1.config_hash() != config2.config_hash()


if __name__ == "__main__":
    pytest.main([__file__])
