"""Per-step telemetry and its CSV form.

The CSV starts with ``# key=value`` metadata lines, then one header line with
the column names, then one row per control step. Floats are written with 17
significant digits so a log read back is bitwise identical to the one written.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ACTUATOR_NAMES

COLUMNS = (
    ["t", "phase", "px", "py", "pz", "vx", "vy", "vz", "phi", "theta", "psi", "p", "q", "r", "airspeed"]
    + [f"uc_{n}" for n in ACTUATOR_NAMES]
    + [f"u0_{n}" for n in ACTUATOR_NAMES]
    + ["sat_mask", "nu_p", "nu_q", "nu_r", "nu_tz"]
    + ["px_ref", "py_ref", "pz_ref", "vx_ref", "vy_ref", "vz_ref", "phi_ref", "theta_ref", "psi_ref"]
    + ["contact"]
)
INDEX = {name: i for i, name in enumerate(COLUMNS)}


class FormatError(ValueError):
    pass


@dataclass
class TelemetryLog:
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64).reshape(-1, len(COLUMNS))

    def __len__(self) -> int:
        return len(self.data)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, INDEX[name]]

    def block(self, first: str, n: int) -> np.ndarray:
        i = INDEX[first]
        return self.data[:, i:i + n]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        buf.write(",".join(COLUMNS) + "\n")
        fmt = ",".join(["%.17g"] * len(COLUMNS))
        np.savetxt(buf, self.data, fmt=fmt, delimiter=",")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "TelemetryLog":
        """Read a log from a path or from CSV text."""
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            try:
                text = Path(source).read_text()
            except OSError as exc:
                raise FormatError(f"cannot read telemetry: {exc}") from None
        else:
            text = source
        meta, rows, header = {}, [], None
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), 1):
            if not row:
                continue
            if row[0].startswith("#"):
                line = ",".join(row)[1:].strip()
                if "=" not in line:
                    raise FormatError(f"line {lineno}: malformed metadata")
                k, v = line.split("=", 1)
                meta[k.strip()] = v.strip()
                continue
            if header is None:
                header = row
                if header != COLUMNS:
                    raise FormatError("unexpected column header")
                continue
            if len(row) != len(COLUMNS):
                raise FormatError(f"line {lineno}: expected {len(COLUMNS)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise FormatError(f"line {lineno}: non-numeric field") from None
        if header is None:
            raise FormatError("missing column header")
        expected = meta.get("rows")
        if expected is not None and int(expected) != len(rows):
            raise FormatError(f"truncated log: {len(rows)} of {expected} rows")
        data = np.array(rows, dtype=np.float64).reshape(-1, len(COLUMNS))
        return cls(data, meta)
