"""Minimal reader for the pipeline's versioned CSV files.

Every file starts with a ``# schema: <name> v<K>`` comment line followed
by a column-header row. The reader insists on the exact schema name and
version it was asked for, so a producer-side format bump fails loudly
here instead of silently misreading columns.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

# schema versions this package knows how to consume
EXPECTED_VERSIONS = {
    "diagnostics": 1,
    "vortices": 1,
    "ode": 1,
    "tf_convergence": 1,
}


class SchemaMismatch(Exception):
    """Input file does not carry the expected schema line."""

    def __init__(self, path, expected_name, expected_version, found):
        self.path = str(path)
        self.expected_name = expected_name
        self.expected_version = expected_version
        self.found = found  # string description of what was there
        super().__init__(
            f"{self.path}: expected schema "
            f"{expected_name} v{expected_version}, found {found}")


@dataclass
class Table:
    """Parsed CSV: column names and rows of floats (strings if unparsable)."""

    schema: str
    version: int
    columns: tuple
    rows: list

    def column(self, name):
        """One column as a list, by header name."""
        try:
            k = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column {name!r}; have {self.columns}")
        return [row[k] for row in self.rows]


def _cell(text):
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path, expected_schema):
    """Read a versioned CSV, enforcing the schema line.

    Raises SchemaMismatch when the first line is missing, malformed, or
    names a different schema/version than requested; OSError when the
    file cannot be read.
    """
    version = EXPECTED_VERSIONS[expected_schema]
    with open(path, "r", newline="") as fh:
        head = fh.readline().rstrip("\r\n")
        if not head.startswith("# schema: "):
            raise SchemaMismatch(path, expected_schema, version,
                                 f"no schema line ({head[:40]!r})")
        name, _, ver = head[len("# schema: "):].rpartition(" v")
        if not name or not ver.isdigit():
            raise SchemaMismatch(path, expected_schema, version,
                                 f"malformed schema line ({head!r})")
        if name != expected_schema or int(ver) != version:
            raise SchemaMismatch(path, expected_schema, version,
                                 f"{name} v{ver}")
        reader = csv.reader(fh)
        try:
            columns = tuple(next(reader))
        except StopIteration:
            raise SchemaMismatch(path, expected_schema, version,
                                 "schema line but no header row")
        rows = [tuple(_cell(c) for c in row) for row in reader if row]
    return Table(expected_schema, version, columns, rows)
