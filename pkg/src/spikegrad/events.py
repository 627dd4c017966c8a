"""Event-file round-tripping.

The shared on-disk form of a spike raster: ASCII text, one event per line
as ``t,i`` (non-negative integers, comma separated, LF line endings),
sorted by t then i, preceded by a ``# T=<int> N=<int>`` header so that
trailing silent steps and neurons survive the trip.  Loading is strict:
malformed lines, out-of-range events and ordering violations are rejected
with the offending line number.
"""

from __future__ import annotations

import numpy as np

from .neuron import SpikeRaster, _as_matrix

__all__ = ["EventFormatError", "save_events", "load_events"]


class EventFormatError(ValueError):
    def __init__(self, path, line_no: int | None, message: str):
        where = f"{path}:{line_no}: " if line_no is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line_no = line_no


def save_events(raster, path) -> None:
    """Write a raster as a sorted event list with its size header."""
    data = _as_matrix(raster)
    t_steps, n = data.shape
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# T={t_steps} N={n}\n")
        ts, ns = np.nonzero(data)
        for t, i in zip(ts, ns):  # nonzero is already row-major: sorted by t then i
            fh.write(f"{t},{i}\n")


def load_events(path) -> SpikeRaster:
    """Parse an event file back into a raster; inverse of :func:`save_events`.

    A file without the size header is accepted, with T and N inferred from
    the largest event coordinates.
    """
    t_declared = n_declared = None
    events: list[tuple[int, int]] = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line_no != 1:
                    raise EventFormatError(path, line_no, "header allowed only on line 1")
                parts = line[1:].split()
                try:
                    kv = dict(p.split("=") for p in parts)
                    t_declared, n_declared = int(kv["T"]), int(kv["N"])
                except (ValueError, KeyError) as exc:
                    raise EventFormatError(
                        path, line_no, f"malformed header {line!r}"
                    ) from exc
                if t_declared < 0 or n_declared < 0:
                    raise EventFormatError(path, line_no, "header sizes must be >= 0")
                continue
            fields = line.split(",")
            if len(fields) != 2:
                raise EventFormatError(path, line_no, f"expected 't,i', got {line!r}")
            try:
                t, i = int(fields[0]), int(fields[1])
            except ValueError as exc:
                raise EventFormatError(
                    path, line_no, f"non-integer event coordinates {line!r}"
                ) from exc
            if t < 0 or i < 0:
                raise EventFormatError(path, line_no, f"negative event coordinates {line!r}")
            if t_declared is not None and (t >= t_declared or i >= n_declared):
                raise EventFormatError(
                    path,
                    line_no,
                    f"event ({t},{i}) outside declared T={t_declared} N={n_declared}",
                )
            if events and (t, i) <= events[-1]:
                raise EventFormatError(
                    path, line_no, f"events not sorted by t then i at ({t},{i})"
                )
            events.append((t, i))

    if t_declared is None:
        t_declared = 1 + max((t for t, _ in events), default=-1)
        n_declared = 1 + max((i for _, i in events), default=-1)
    data = np.zeros((t_declared, n_declared))
    for t, i in events:
        data[t, i] = 1.0
    return SpikeRaster(data)
