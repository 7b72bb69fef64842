"""Append-only history buffers: actions performed and objects seen.

Both buffers are flat logs ordered by timestamp with a binary-searchable
time index.  Nothing is ever mutated or removed; queries return slices in
insertion order.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import NonMonotoneTimestamp
from .geometry import Box3D


@dataclass
class ActionRecord:
    timestamp_s: float
    verb: str
    raw_text: str
    target_ids: List[int]
    frame_feat: Optional[np.ndarray] = None
    scripted: bool = False  # True when targets were supplied, no oracle ran


@dataclass
class VisibleRecord:
    timestamp_s: float
    object_id: int
    box: Box3D


class _TimeOrderedBuffer:
    def __init__(self):
        self._records = []
        self._times = []

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def _append(self, rec, timestamp_s: float):
        if self._times and timestamp_s < self._times[-1]:
            raise NonMonotoneTimestamp(
                f"timestamp {timestamp_s} precedes buffer tail {self._times[-1]}")
        self._records.append(rec)
        self._times.append(timestamp_s)

    def _time_slice(self, time_range: Optional[Tuple[float, float]]):
        if time_range is None:
            return self._records
        t0, t1 = time_range
        return self._records[bisect_left(self._times, t0):bisect_right(self._times, t1)]


class ActionBuffer(_TimeOrderedBuffer):
    def append(self, rec: ActionRecord):
        self._append(rec, rec.timestamp_s)

    def query(self, time_range=None, object_id=None, verb=None) -> List[ActionRecord]:
        out = []
        for rec in self._time_slice(time_range):
            if object_id is not None and object_id not in rec.target_ids:
                continue
            if verb is not None and rec.verb != verb:
                continue
            out.append(rec)
        return out


class VisibleBuffer(_TimeOrderedBuffer):
    def append(self, rec: VisibleRecord):
        self._append(rec, rec.timestamp_s)

    def query(self, time_range=None, object_id=None) -> List[VisibleRecord]:
        out = []
        for rec in self._time_slice(time_range):
            if object_id is not None and rec.object_id != object_id:
                continue
            out.append(rec)
        return out


def query_history(buf, time_range=None, object_id=None, verb=None):
    """Uniform filter over either buffer; a verb filter on the visible
    buffer matches nothing (those records carry no verb)."""
    if isinstance(buf, ActionBuffer):
        return buf.query(time_range=time_range, object_id=object_id, verb=verb)
    if verb is not None:
        return []
    return buf.query(time_range=time_range, object_id=object_id)
