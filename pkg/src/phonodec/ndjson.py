"""Newline-delimited JSON: the container for every record-oriented file format."""

import json

from .errors import DataError


def read_ndjson(path):
    """Parse one JSON object per line, skipping blank lines."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
    return records


def write_ndjson(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def require_fields(record, fields, where):
    """Raise DataError naming the first missing key of `fields`."""
    for key in fields:
        if key not in record:
            raise DataError(f"{where}: missing field '{key}'")
