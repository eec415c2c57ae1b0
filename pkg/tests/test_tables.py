"""
Tests for result tables and their file formats.
"""

import tempfile
from pathlib import Path

import pytest

from src.errors import OutputError, ParseError, ValidationError
from src.tables import (Column, ResultTable, emit_table, format_csv, format_text,
                        read_table)


def _sample_table():
    table = ResultTable.with_columns(("method", "str"), ("iterations", "int"), ("error", "float"),
                                     metadata={"experiment": "Sample", "seed": 3})
    table.add_row(method="lh", iterations=4, error=0.1)
    table.add_row(method="gd-3l", iterations=1200, error=1.0 / 3.0)
    return table


class TestResultTable:
    """Test the table container."""

    def test_add_row_checks_columns(self):
        """Missing and unknown columns are rejected."""
        table = ResultTable.with_columns(("a", "int"), ("b", "float"))
        with pytest.raises(ValidationError):
            table.add_row(a=1)
        with pytest.raises(ValidationError):
            table.add_row(a=1, b=2.0, c=3)

    def test_coercion(self):
        """Values are coerced to the column kind."""
        table = ResultTable.with_columns(("a", "int"), ("b", "float"), ("ok", "bool"))
        table.add_row(a=2.0, b=1, ok=1)
        assert table.rows[0] == {"a": 2, "b": 1.0, "ok": True}
        assert isinstance(table.rows[0]["a"], int)

    def test_unknown_kind(self):
        """Unknown column kinds are rejected."""
        with pytest.raises(ValidationError):
            Column("x", "complex")

    def test_column_and_where(self):
        """Column extraction and filtering."""
        table = _sample_table()
        assert table.column("iterations") == [4, 1200]
        assert table.where(method="lh")[0]["iterations"] == 4
        with pytest.raises(KeyError):
            table.column("missing")


class TestFormats:
    """Test CSV and text rendering."""

    def test_header_only_csv(self):
        """An empty table still writes its header."""
        table = ResultTable.with_columns(("a", "int"), ("b", "float"))
        lines = [line for line in format_csv(table).splitlines() if not line.startswith("#")]
        assert lines == ["a,b"]

    def test_csv_metadata_block(self):
        """Metadata is written as commented YAML."""
        text = format_csv(_sample_table())
        assert "# experiment: Sample" in text
        assert "# seed: 3" in text

    def test_float_precision(self):
        """Floats keep 17 significant digits."""
        text = format_csv(_sample_table())
        assert "0.33333333333333331" in text

    def test_csv_round_trip(self):
        """read_table parses emit_table output back to the same rows."""
        table = _sample_table()
        table.add_row(method="pgd", iterations=0, error=float("inf"))
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "out.csv"
            emit_table(table, path)
            loaded = read_table(path)
        assert loaded.rows == table.rows
        assert loaded.metadata == table.metadata
        assert [c.kind for c in loaded.columns] == ["str", "int", "float"]

    def test_text_alignment(self):
        """Text output aligns columns and lists scalar metadata."""
        text = format_text(_sample_table())
        lines = text.splitlines()
        assert lines[0] == "# experiment: Sample"
        header = next(line for line in lines if line.startswith("method"))
        rows = [line for line in lines if line.startswith("lh") or line.startswith("gd-3l")]
        assert len(rows) == 2
        assert len({len(row) for row in rows}) == 1
        assert header.index("iterations") < header.index("error")

    def test_attachments_written(self):
        """Attachments land next to the main table."""
        table = _sample_table()
        curve = ResultTable.with_columns(("iter", "int"), ("objective", "float"))
        curve.add_row(iter=0, objective=1.0)
        table.attachments["curves"] = curve
        with tempfile.TemporaryDirectory() as temp_dir:
            written = emit_table(table, Path(temp_dir) / "race.csv")
            assert [p.name for p in written] == ["race.csv", "race.curves.csv"]
            assert read_table(written[1]).rows == [{"iter": 0, "objective": 1.0}]

    def test_unwritable_path(self):
        """Writing below a regular file raises OutputError."""
        with tempfile.TemporaryDirectory() as temp_dir:
            blocker = Path(temp_dir) / "file"
            blocker.write_text("x")
            with pytest.raises(OutputError):
                emit_table(_sample_table(), blocker / "out.csv")

    def test_unknown_format(self):
        """Only csv and text are supported."""
        with pytest.raises(ValidationError):
            emit_table(_sample_table(), "out.json", format="json")

    def test_read_malformed_row(self):
        """A short row is reported with its line number."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "bad.csv"
            path.write_text("# column_types: {a: int, b: int}\na,b\n1,2\n3\n")
            with pytest.raises(ParseError) as excinfo:
                read_table(path)
            assert excinfo.value.line == 4


if __name__ == "__main__":
    pytest.main([__file__])
