"""writes the CSV artifacts, once and atomically"""

import csv
import os
import tempfile
from numbers import Real


def format_cell(value):
    """Format a cell so identical values give identical bytes."""
    if isinstance(value, bool) or not isinstance(value, Real):
        return "" if value is None else str(value)
    return format(float(value), ".17g")


def write_csv(path, header, rows):
    """Write a header row and data rows to path via a temporary file.
    Returns the path written."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(handle, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def read_csv(path):
    """Read a CSV written by write_csv into (header, rows of strings)."""
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]
