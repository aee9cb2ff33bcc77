"""Delimited report output: provenance header, schema row, atomic writes.

CSV layout::

    # cspattn-report v1
    # command: rank-decay
    # version: 0.1.0
    # seed: 31
    # config_hash: <sha256 of the resolved config>
    # created: <UTC timestamp>
    layer,residual_norm1inf,...
    0,47.3,...

Everything that varies between identical runs lives in the ``#`` header, so
the body (schema row onward) is byte-identical for identical configs.
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone

from . import __version__

__all__ = [
    "Provenance",
    "config_hash",
    "format_value",
    "render_csv",
    "render_json",
    "parse_csv",
    "body_of",
    "atomic_write",
]

MAGIC = "cspattn-report v1"


def config_hash(command, params):
    canon = command + "\n" + "\n".join(f"{k}={params[k]}" for k in sorted(params))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Provenance:
    command: str
    seed: int
    config_hash: str
    version: str = __version__
    created: str = ""

    @classmethod
    def now(cls, command, seed, params):
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        return cls(command, seed, config_hash(command, params), __version__, stamp)

    def items(self):
        return [
            ("command", self.command),
            ("version", self.version),
            ("seed", str(self.seed)),
            ("config_hash", self.config_hash),
            ("created", self.created),
        ]


def format_value(v):
    """Shortest round-trip text for floats; plain ``str`` otherwise."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_csv(provenance, columns, rows):
    buf = io.StringIO()
    buf.write(f"# {MAGIC}\n")
    for k, v in provenance.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def render_json(provenance, columns, rows):
    doc = {
        "provenance": dict(provenance.items()),
        "columns": list(columns),
        "rows": [[format_value(v) for v in row] for row in rows],
    }
    return json.dumps(doc, indent=1) + "\n"


def parse_csv(text):
    """Inverse of :func:`render_csv`: ``(header dict, columns, rows of str)``."""
    lines = text.splitlines()
    if not lines or lines[0] != f"# {MAGIC}":
        raise ValueError("missing report header")
    header = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        key, _, value = lines[i][2:].partition(": ")
        header[key] = value
        i += 1
    table = list(csv.reader(lines[i:]))
    if not table:
        raise ValueError("missing schema row")
    return header, table[0], table[1:]


def body_of(text):
    """Schema row and data rows of a CSV report, without the header."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("# "))


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to a temp file beside ``path``, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
