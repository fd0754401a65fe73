"""
Multi Index - Exact non-exhaustive search
Substring inverted tables probed in best-first partial-score order
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.errors import DimensionError, StaleIndexError
from src.hash_core import bits_to_signs, unpack_bits
from src.search import CodeDatabase, CodeSnapshot, QueryWeights, score_codes, top_k_order


def default_substrings(bits: int) -> int:
    return max(1, round(bits / 8))


def substring_bounds(bits: int, m: int) -> List[Tuple[int, int]]:
    """Split [0, bits) into m contiguous ranges whose lengths differ by at most one"""
    if not 1 <= m <= bits:
        raise ValueError(f"substring count must be in [1, {bits}], got {m}")

    base, extra = divmod(bits, m)
    bounds = []
    lo = 0
    for i in range(m):
        hi = lo + base + (1 if i < extra else 0)
        bounds.append((lo, hi))
        lo = hi
    return bounds


def _key_of(bit_row: np.ndarray) -> int:
    """Substring bits -> int, bit 0 of the substring is the least significant"""
    return int.from_bytes(np.packbits(bit_row, bitorder='little').tobytes(), 'little')


@dataclass(frozen=True)
class SubstringTable:
    """
    One inverted table

    keys[i] is a distinct substring value, signs[i] its {-1, +1} bits, and
    positions[offsets[i]:offsets[i + 1]] the ascending database positions
    holding it.
    """
    lo: int
    hi: int
    keys: Tuple[int, ...]
    signs: np.ndarray
    positions: np.ndarray
    offsets: np.ndarray

    def posting(self, key_index: int) -> np.ndarray:
        return self.positions[self.offsets[key_index]:self.offsets[key_index + 1]]

    @property
    def size(self) -> int:
        return self.positions.shape[0]


def _build_table(bits: np.ndarray, lo: int, hi: int, start: int = 0) -> Tuple[np.ndarray, np.ndarray, List[np.ndarray]]:
    """Unique substring rows of bits[:, lo:hi] and the positions of each"""
    segment = bits[:, lo:hi]
    unique_rows, inverse = np.unique(segment, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind='stable')
    counts = np.bincount(inverse, minlength=unique_rows.shape[0])
    groups = np.split(order + start, np.cumsum(counts)[:-1])
    return unique_rows, inverse, groups


def _make_table(lo: int, hi: int, rows: List[np.ndarray], groups: List[np.ndarray]) -> SubstringTable:
    keys = tuple(_key_of(row) for row in rows)
    signs = bits_to_signs(np.array(rows, dtype=np.uint8).reshape(len(rows), hi - lo))
    signs.setflags(write=False)
    lengths = np.array([g.shape[0] for g in groups], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
    positions = np.concatenate(groups).astype(np.int64) if groups else np.zeros(0, dtype=np.int64)
    positions.setflags(write=False)
    offsets.setflags(write=False)
    return SubstringTable(lo, hi, keys, signs, positions, offsets)


class MultiIndex:
    """
    m substring tables over one database snapshot

    Immutable; extend() returns a new index covering appended records.
    """

    def __init__(self, snapshot: CodeSnapshot, tables: List[SubstringTable], source=None):
        self.snapshot = snapshot
        self.tables = tables
        self.source = source

    @property
    def bits(self) -> int:
        return self.snapshot.bits

    @property
    def n_records(self) -> int:
        return len(self.snapshot)

    @property
    def bounds(self) -> List[Tuple[int, int]]:
        return [(t.lo, t.hi) for t in self.tables]

    def __len__(self) -> int:
        return len(self.tables)

    def posting(self, table_index: int, key: int) -> List[int]:
        """Record ids filed under a substring value"""
        table = self.tables[table_index]
        try:
            key_index = table.keys.index(key)
        except ValueError:
            return []
        return [int(i) for i in self.snapshot.ids[table.posting(key_index)]]

    def table_sizes(self) -> List[int]:
        return [t.size for t in self.tables]

    def check_current(self) -> None:
        if self.source is not None and len(self.source) != self.n_records:
            raise StaleIndexError(
                f"index covers {self.n_records} records but the database holds {len(self.source)}; "
                f"rebuild or extend it"
            )

    def extend(self, db) -> 'MultiIndex':
        """Merge records appended since the index was built"""
        snapshot = db.snapshot() if isinstance(db, CodeDatabase) else db
        source = db if isinstance(db, CodeDatabase) else None
        old_n = self.n_records

        if snapshot.bits != self.bits:
            raise DimensionError(f"{snapshot.bits}-bit database for a {self.bits}-bit index")
        if len(snapshot) < old_n or not np.array_equal(snapshot.ids[:old_n], self.snapshot.ids):
            raise StaleIndexError("database is not an extension of the indexed snapshot")
        if len(snapshot) == old_n:
            return MultiIndex(snapshot, self.tables, source)

        new_bits = unpack_bits(snapshot.words[old_n:], self.bits)
        tables = []
        for table in self.tables:
            rows, _, groups = _build_table(new_bits, table.lo, table.hi, start=old_n)
            merged: Dict[int, Tuple[np.ndarray, List[np.ndarray]]] = {}
            order = []
            for i, key in enumerate(table.keys):
                merged[key] = (table.signs[i] > 0, [table.posting(i)])
                order.append(key)
            for row, group in zip(rows, groups):
                key = _key_of(row)
                if key in merged:
                    merged[key][1].append(group)
                else:
                    merged[key] = (row.astype(bool), [group])
                    order.append(key)

            key_rows = [merged[k][0].astype(np.uint8) for k in order]
            key_groups = [np.concatenate(merged[k][1]) for k in order]
            tables.append(_make_table(table.lo, table.hi, key_rows, key_groups))

        return MultiIndex(snapshot, tables, source)


def build_multi_index(db, m: Optional[int] = None) -> MultiIndex:
    """
    Index every code of a database under m contiguous substrings

    Args:
        db: CodeDatabase (queries later check it has not grown) or CodeSnapshot
        m: Substring count, default max(1, round(b / 8))
    """
    snapshot = db.snapshot() if isinstance(db, CodeDatabase) else db
    source = db if isinstance(db, CodeDatabase) else None
    bits = snapshot.bits
    m = default_substrings(bits) if m is None else m

    all_bits = unpack_bits(snapshot.words, bits) if len(snapshot) else np.zeros((0, bits), dtype=np.uint8)
    tables = []
    for lo, hi in substring_bounds(bits, m):
        if len(snapshot):
            rows, _, groups = _build_table(all_bits, lo, hi)
            tables.append(_make_table(lo, hi, list(rows), groups))
        else:
            tables.append(_make_table(lo, hi, [], []))

    return MultiIndex(snapshot, tables, source)


@dataclass
class MultiIndexResult:
    hits: List[Tuple[int, float]]
    probed: int
    rounds: int


def multi_index_search(idx: MultiIndex, w: QueryWeights, K: int) -> MultiIndexResult:
    """
    Exact top-K by best-first probing

    Each table lists its substring values by decreasing partial score. Values
    are popped from every table in batches that double each round; unseen
    records under them get full scores. Probing stops once the sum of the best
    remaining partial scores cannot reach the K-th best full score, or a table
    runs out (every record then has been scored).
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    idx.check_current()
    if w.nbits != idx.bits:
        raise DimensionError(f"{w.nbits}-bit weights against a {idx.bits}-bit index")

    snap = idx.snapshot
    n = len(snap)
    if n == 0:
        return MultiIndexResult([], 0, 0)

    k_eff = min(K, n)
    tol = 1e-9 * (1.0 + float(np.abs(w.m_hat).sum()))

    ranked_keys = []
    for table in idx.tables:
        partial = table.signs @ w.m_hat[table.lo:table.hi]
        order = np.lexsort((np.arange(partial.shape[0]), -partial))
        ranked_keys.append((order, partial[order]))

    seen = np.zeros(n, dtype=bool)
    cand_positions: List[np.ndarray] = []
    cand_scores: List[np.ndarray] = []
    cursors = [0] * len(idx.tables)
    batch = 1
    rounds = 0
    probed = 0

    while True:
        rounds += 1
        popped = []
        for t, table in enumerate(idx.tables):
            order, _ = ranked_keys[t]
            stop = min(cursors[t] + batch, order.shape[0])
            popped.extend(table.posting(k) for k in order[cursors[t]:stop])
            cursors[t] = stop

        if popped:
            fresh = np.unique(np.concatenate(popped))
            fresh = fresh[~seen[fresh]]
            if fresh.size:
                seen[fresh] = True
                cand_positions.append(fresh)
                cand_scores.append(score_codes(w, snap.words[fresh]))
                probed += fresh.size

        if any(cursors[t] >= ranked_keys[t][0].shape[0] for t in range(len(idx.tables))):
            break

        if probed >= k_eff:
            bound = sum(float(ranked_keys[t][1][cursors[t]]) for t in range(len(idx.tables)))
            scores = np.concatenate(cand_scores)
            kth = np.partition(-scores, k_eff - 1)[k_eff - 1]
            if bound + tol < -kth:
                break

        batch *= 2

    positions = np.concatenate(cand_positions)
    scores = np.concatenate(cand_scores)
    order = top_k_order(-scores, snap.ids[positions], k_eff)
    hits = [(int(snap.ids[positions[p]]), float(scores[p])) for p in order]
    return MultiIndexResult(hits, probed, rounds)


def multi_index_topk(idx: MultiIndex, w: QueryWeights, K: int) -> List[Tuple[int, float]]:
    """Same output as linear_scan_topk on the indexed snapshot"""
    return multi_index_search(idx, w, K).hits
