"""
Tabular results: the ResultTable container and its CSV / humane-text forms.

CSV layout: a block of ``#``-prefixed YAML metadata lines, one header row,
then data rows. Floats are written with 17 significant digits so they
read back bit-exactly.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from jinja2 import Template

from .errors import OutputError, ParseError, ValidationError

COLUMN_KINDS = ("int", "float", "str", "bool")
TEMPLATES_DIR = Path(__file__).parent / "templates"


@dataclass
class Column:
    """A named, typed column."""
    name: str
    kind: str = "float"

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise ValidationError([f"column '{self.name}' has unknown kind '{self.kind}'"], "Table schema")

    def coerce(self, value: Any) -> Any:
        if self.kind == "int":
            return int(value)
        if self.kind == "float":
            return float(value)
        if self.kind == "bool":
            return bool(value)
        return str(value)

    def parse(self, text: str) -> Any:
        if self.kind == "int":
            return int(text)
        if self.kind == "float":
            return float(text)
        if self.kind == "bool":
            return text.strip().lower() == "true"
        return text

    def format(self, value: Any) -> str:
        if self.kind == "float":
            return format_float(value)
        if self.kind == "bool":
            return "true" if value else "false"
        return str(value)


@dataclass
class ResultTable:
    """Rectangular table of typed columns with metadata and optional attachments.

    Attachments are further named tables (curves, medians, trajectories)
    written next to the main table.
    """
    columns: List[Column]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    attachments: Dict[str, 'ResultTable'] = field(default_factory=dict)

    @classmethod
    def with_columns(cls, *specs: Tuple[str, str], metadata: Optional[Dict[str, Any]] = None) -> 'ResultTable':
        return cls(columns=[Column(name, kind) for name, kind in specs], metadata=dict(metadata or {}))

    @property
    def column_names(self) -> List[str]:
        return [column.name for column in self.columns]

    def add_row(self, **values: Any):
        """Append a row; every column must be supplied and nothing else."""
        names = self.column_names
        missing = [name for name in names if name not in values]
        extra = [name for name in values if name not in names]
        if missing or extra:
            issues = [f"missing column '{name}'" for name in missing]
            issues += [f"unknown column '{name}'" for name in extra]
            raise ValidationError(issues, "Row")
        self.rows.append({column.name: column.coerce(values[column.name]) for column in self.columns})

    def column(self, name: str) -> List[Any]:
        if name not in self.column_names:
            raise KeyError(name)
        return [row[name] for row in self.rows]

    def where(self, **criteria: Any) -> List[Dict[str, Any]]:
        return [row for row in self.rows if all(row[key] == value for key, value in criteria.items())]

    def validate(self) -> List[str]:
        issues = []
        names = self.column_names
        if len(set(names)) != len(names):
            issues.append("duplicate column names")
        for index, row in enumerate(self.rows):
            if list(row.keys()) != names:
                issues.append(f"row {index} does not match the header")
        return issues


def format_float(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def format_csv(table: ResultTable) -> str:
    """Render the table as CSV text with its metadata header block."""
    issues = table.validate()
    if issues:
        raise ValidationError(issues, "Table")
    buffer = io.StringIO()
    metadata = dict(table.metadata)
    metadata["column_types"] = {column.name: column.kind for column in table.columns}
    header = yaml.safe_dump(metadata, sort_keys=True, default_flow_style=None)
    for line in header.splitlines():
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(table.column_names)
    for row in table.rows:
        writer.writerow([column.format(row[column.name]) for column in table.columns])
    return buffer.getvalue()


def format_text(table: ResultTable) -> str:
    """Render aligned columns for terminals."""
    headers = table.column_names
    cells = [[column.format(row[column.name]) for column in table.columns] for row in table.rows]
    widths = [len(name) for name in headers]
    for line in cells:
        widths = [max(width, len(cell)) for width, cell in zip(widths, line)]
    numeric = [column.kind in ("int", "float") for column in table.columns]

    def align(values):
        return "  ".join(value.rjust(width) if right else value.ljust(width)
                         for value, width, right in zip(values, widths, numeric)).rstrip()

    template = Template((TEMPLATES_DIR / "table.txt.template").read_text(encoding="utf-8"))
    return template.render(
        metadata=sorted((key, value) for key, value in table.metadata.items()
                        if not isinstance(value, (dict, list))),
        header=align(headers),
        rule="-" * len(align(headers)),
        lines=[align(line) for line in cells],
    )


def attachment_path(path: Path, name: str) -> Path:
    return path.with_name(f"{path.stem}.{name}{path.suffix}")


def emit_table(table: ResultTable, path: Union[str, Path], format: str = "csv") -> List[Path]:
    """Write the table (and its attachments) to disk; returns the paths written."""
    renderers = {"csv": format_csv, "text": format_text}
    if format not in renderers:
        raise ValidationError([f"unknown table format '{format}'"], "Output")
    path = Path(path)
    written = []
    targets = [(path, table)] + [(attachment_path(path, name), sub) for name, sub in table.attachments.items()]
    for target, sub in targets:
        content = renderers[format](sub)
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", encoding="utf-8", newline="") as f:
                f.write(content)
        except OSError as e:
            raise OutputError(f"cannot write {target}: {e}")
        written.append(target)
    return written


def read_table(path: Union[str, Path]) -> ResultTable:
    """Parse a CSV written by ``emit_table`` (attachments are separate files)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}")

    lines = text.splitlines()
    header_lines = []
    body_start = 0
    for body_start, line in enumerate(lines):
        if not line.startswith("#"):
            break
        header_lines.append(line[2:] if line.startswith("# ") else line[1:])
    else:
        body_start = len(lines)

    try:
        metadata = yaml.safe_load("\n".join(header_lines)) or {}
    except yaml.YAMLError as e:
        raise ParseError(f"malformed metadata block: {e}", line=1)
    kinds = metadata.pop("column_types", {})

    reader = csv.reader(lines[body_start:])
    try:
        names = next(reader)
    except StopIteration:
        raise ParseError("missing header row", line=body_start + 1)
    columns = [Column(name, kinds.get(name, "str")) for name in names]
    table = ResultTable(columns=columns, metadata=metadata)
    for offset, record in enumerate(reader, start=body_start + 2):
        if len(record) != len(columns):
            raise ParseError(f"expected {len(columns)} cells, got {len(record)}", line=offset)
        try:
            table.rows.append({column.name: column.parse(cell) for column, cell in zip(columns, record)})
        except ValueError as e:
            raise ParseError(str(e), line=offset)
    return table
