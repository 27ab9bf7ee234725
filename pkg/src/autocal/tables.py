"""Small CSV helpers with exact float round-tripping.

Floats are written with ``repr`` (shortest round-trip form) so emitted
tables re-parse to identical values and reruns are byte-identical.
"""

import csv
import math


def format_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([str(h) for h in header])
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def read_csv(path):
    """Read back a table as (header, rows of strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return header, rows


def parse_float(text):
    return math.nan if text == "" else float(text)
