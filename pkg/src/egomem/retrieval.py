"""Query surface over the memory snapshot.

Two relational views are derived from the live memory:

    Objects(object_id INT, category TEXT, volume FLOAT)
    Objects_Frames(object_id INT, frame_id INT)

Objects has one row per entry (volume = live box volume); Objects_Frames
has one row per visibility event, sourced from the visible-object buffer.
query_structured evaluates a small SQL-like predicate language over these
views (grammar in the README); everything else is exhaustive cosine
scoring with deterministic tie-breaking (descending score, ascending id).
No approximate index is used anywhere.
"""

from __future__ import annotations

import re
from typing import Dict, List, Tuple

import numpy as np

from .errors import (DimensionMismatch, EmptyMemory, MalformedPredicate,
                     UnknownColumn)
from .memory import ObjectMemory

OBJECTS_COLUMNS = ("object_id", "category", "volume")
OBJECTS_FRAMES_COLUMNS = ("object_id", "frame_id")


def objects_rows(memory: ObjectMemory) -> List[Dict]:
    return [{"object_id": oid,
             "category": memory.entries[oid].category,
             "volume": memory.entries[oid].box.volume()}
            for oid in memory.sorted_ids()]


def objects_frames_rows(memory: ObjectMemory) -> List[Dict]:
    by_time = {round(fm.timestamp_s, 9): fm.frame_id for fm in memory.frames}
    rows = []
    for rec in memory.visible_buffer:
        fid = by_time.get(round(rec.timestamp_s, 9))
        if fid is None:
            continue
        rows.append({"object_id": rec.object_id, "frame_id": fid})
    return rows


# -- tiny SQL-ish parser ---------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>-?\d+\.?\d*(?:[eE][-+]?\d+)?)"
    r"|(?P<str>'[^']*'|\"[^\"]*\")"
    r"|(?P<op><=|>=|=|<|>)"
    r"|(?P<punct>[(),*])"
    r"|(?P<word>[A-Za-z_][A-Za-z_0-9]*))")


def _tokenize(text: str):
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            if text[pos:].strip():
                raise MalformedPredicate(f"cannot tokenize near {text[pos:pos+20]!r}")
            break
        pos = m.end()
        for kind in ("num", "str", "op", "punct", "word"):
            if m.group(kind) is not None:
                tokens.append((kind, m.group(kind)))
                break
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_word(self, *words):
        kind, val = self.next()
        if kind != "word" or val.lower() not in words:
            raise MalformedPredicate(f"expected {'/'.join(words)}, got {val!r}")
        return val.lower()

    def expect_punct(self, ch):
        kind, val = self.next()
        if kind != "punct" or val != ch:
            raise MalformedPredicate(f"expected {ch!r}, got {val!r}")

    def value(self):
        kind, val = self.next()
        if kind == "num":
            f = float(val)
            return int(f) if f.is_integer() and "." not in val and "e" not in val.lower() else f
        if kind == "str":
            return val[1:-1]
        raise MalformedPredicate(f"expected a literal, got {val!r}")


def _parse(text: str):
    p = _Parser(_tokenize(text))
    p.expect_word("select")
    cols = []
    kind, val = p.peek()
    if kind == "punct" and val == "*":
        p.next()
        cols = ["*"]
    else:
        while True:
            kind, val = p.next()
            if kind != "word":
                raise MalformedPredicate(f"expected a column name, got {val!r}")
            cols.append(val.lower())
            kind, val = p.peek()
            if kind == "punct" and val == ",":
                p.next()
                continue
            break
    p.expect_word("from")
    table = p.expect_word("objects", "objects_frames")
    kind, val = p.peek()
    if kind == "word" and val.lower() == "join":
        p.next()
        other = p.expect_word("objects", "objects_frames")
        if other == table:
            raise MalformedPredicate("cannot join a table with itself")
        table = "join"
    conditions = []
    kind, val = p.peek()
    if kind == "word" and val.lower() == "where":
        p.next()
        while True:
            kind, val = p.next()
            if kind != "word":
                raise MalformedPredicate(f"expected a column name, got {val!r}")
            col = val.lower()
            kind, val = p.peek()
            if kind == "word" and val.lower() == "in":
                p.next()
                p.expect_punct("(")
                values = [p.value()]
                while True:
                    kind, val = p.peek()
                    if kind == "punct" and val == ",":
                        p.next()
                        values.append(p.value())
                    else:
                        break
                p.expect_punct(")")
                conditions.append((col, "in", values))
            elif kind == "word" and val.lower() == "between":
                p.next()
                lo = p.value()
                p.expect_word("and")
                hi = p.value()
                conditions.append((col, "between", (lo, hi)))
            elif kind == "op":
                p.next()
                conditions.append((col, val, p.value()))
            else:
                raise MalformedPredicate(f"expected an operator, got {val!r}")
            kind, val = p.peek()
            if kind == "word" and val.lower() == "and":
                p.next()
                continue
            break
    kind, val = p.peek()
    if kind is not None:
        raise MalformedPredicate(f"trailing input at {val!r}")
    return cols, table, conditions


def _match(row: Dict, cond) -> bool:
    col, op, rhs = cond
    lhs = row[col]
    if op == "in":
        return any(lhs == v for v in rhs)
    if op == "between":
        return rhs[0] <= lhs <= rhs[1]
    if op == "=":
        return lhs == rhs
    if isinstance(lhs, str) != isinstance(rhs, str):
        raise MalformedPredicate(f"cannot compare {col} with {rhs!r}")
    if op == "<":
        return lhs < rhs
    if op == ">":
        return lhs > rhs
    if op == "<=":
        return lhs <= rhs
    if op == ">=":
        return lhs >= rhs
    raise MalformedPredicate(f"unknown operator {op!r}")


def query_structured(memory: ObjectMemory, query: str) -> List[tuple]:
    """Evaluate a structured query; rows come back as tuples sorted
    ascending for deterministic output."""
    cols, table, conditions = _parse(query)
    if table == "objects":
        rows, schema = objects_rows(memory), OBJECTS_COLUMNS
    elif table == "objects_frames":
        rows, schema = objects_frames_rows(memory), OBJECTS_FRAMES_COLUMNS
    else:
        frames = objects_frames_rows(memory)
        by_id = {r["object_id"]: r for r in objects_rows(memory)}
        rows = [{**by_id[fr["object_id"]], "frame_id": fr["frame_id"]}
                for fr in frames if fr["object_id"] in by_id]
        schema = ("object_id", "category", "volume", "frame_id")
    if cols == ["*"]:
        cols = list(schema)
    for col in cols:
        if col not in schema:
            raise UnknownColumn(f"column {col!r} not in {sorted(schema)}")
    for col, _, _ in conditions:
        if col not in schema:
            raise UnknownColumn(f"column {col!r} not in {sorted(schema)}")
    out = [tuple(row[c] for c in cols)
           for row in rows if all(_match(row, cond) for cond in conditions)]
    return sorted(out, key=lambda t: tuple((isinstance(v, str), v) for v in t))


# -- similarity retrieval --------------------------------------------------

def _check_query(q, dim: int) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (dim,):
        raise DimensionMismatch(f"query dim {q.shape} does not match {dim}")
    return q


def retrieve_by_appearance(memory: ObjectMemory, q, k: int = 10,
                           channel: str = "clip") -> List[Tuple[int, float]]:
    """Top-k entries by cosine against the object appearance feature."""
    ids = memory.sorted_ids()
    if not ids:
        return []
    attr = {"clip": "chan_clip", "dino": "chan_dino"}[channel]
    first = getattr(memory.entries[ids[0]].obj_feat, attr)
    q = _check_query(q, first.shape[0])
    scored = [(oid, float(q @ getattr(memory.entries[oid].obj_feat, attr)))
              for oid in ids]
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def retrieve_by_environment(memory: ObjectMemory, q,
                            k: int = 10) -> List[Tuple[int, float]]:
    """Top-k entries by cosine against the environment context feature."""
    ids = memory.sorted_ids()
    if not ids:
        return []
    q = _check_query(q, memory.entries[ids[0]].ctx_feat.shape[0])
    scored = [(oid, float(q @ memory.entries[oid].ctx_feat)) for oid in ids]
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def temporal_loc(memory: ObjectMemory, q, k: int = 5) -> List[Tuple[int, float]]:
    """Top-k frame ids by cosine against per-frame context features."""
    if not memory.frames:
        raise EmptyMemory("no frames ingested")
    q = _check_query(q, memory.frames[0].ctx_feat.shape[0])
    scored = [(fm.frame_id, float(q @ fm.ctx_feat)) for fm in memory.frames]
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def _single_linkage_clusters(centers: np.ndarray, cutoff: float) -> List[List[int]]:
    """Connected components of the <=cutoff distance graph (single-linkage
    agglomeration stopped at the cutoff).  Blocked pairwise scan."""
    n = len(centers)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    block = 512
    for i0 in range(0, n, block):
        a = centers[i0:i0 + block]
        for j0 in range(i0, n, block):
            b = centers[j0:j0 + block]
            d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
            ii, jj = np.nonzero(d2 <= cutoff * cutoff)
            for i, j in zip(ii + i0, jj + j0):
                if i < j:
                    ri, rj = find(int(i)), find(int(j))
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
    groups: Dict[int, List[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [groups[r] for r in sorted(groups)]


def spatial_loc(memory: ObjectMemory, q, k: int = 3,
                cutoff: float = 1.5) -> List[Tuple[np.ndarray, float]]:
    """Centroids of the top-k object clusters ranked by mean context
    similarity of the cluster members."""
    ids = memory.sorted_ids()
    if not ids:
        raise EmptyMemory("no entries in memory")
    q = _check_query(q, memory.entries[ids[0]].ctx_feat.shape[0])
    centers = np.stack([memory.entries[oid].box.center() for oid in ids])
    sims = np.array([float(q @ memory.entries[oid].ctx_feat) for oid in ids])
    clusters = _single_linkage_clusters(centers, cutoff)
    ranked = sorted(
        ((float(sims[members].mean()), min(ids[m] for m in members), members)
         for members in clusters),
        key=lambda t: (-t[0], t[1]))
    return [(centers[members].mean(axis=0), score)
            for score, _, members in ranked[:k]]
