"""
Search - Asymmetric retrieval over binary codes
Weighted scan with the learned similarity, plus Hamming and symmetric baselines
"""

import threading
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import DataError, DimensionError
from src.hash_core import BinaryCode, bits_to_signs, check_vector, hamming_many, num_words


def _byte_signs() -> np.ndarray:
    byte_values = np.arange(256, dtype=np.uint8)[:, None]
    bits = np.unpackbits(byte_values, axis=1, bitorder='little')
    return bits_to_signs(bits)


# (256, 8): sign of bit j within byte value v
BYTE_SIGNS = _byte_signs()


class QueryWeights:
    """
    Per-query bit weights m_hat = M^T q

    w_i(+1) = m_hat_i and w_i(-1) = -m_hat_i. Scoring goes through a table of
    the summed weights of every possible byte, built once per query.
    """

    __slots__ = ('m_hat', 'table', 'nbits')

    def __init__(self, m_hat):
        m_hat = np.array(m_hat, dtype=np.float64).reshape(-1)
        if m_hat.shape[0] < 1:
            raise DimensionError("query weights need at least one bit")
        m_hat.setflags(write=False)

        nbits = m_hat.shape[0]
        padded = np.zeros(num_words(nbits) * 64)
        padded[:nbits] = m_hat
        table = padded.reshape(-1, 8) @ BYTE_SIGNS.T
        # padding bits carry zero weight, so they contribute 0 whichever way they are set
        table.setflags(write=False)

        self.m_hat = m_hat
        self.table = table
        self.nbits = nbits

    def weight(self, i: int, bit: int) -> float:
        return float(self.m_hat[i]) if bit > 0 else -float(self.m_hat[i])


def query_weights(M: np.ndarray, q) -> QueryWeights:
    """Precompute m_hat = M^T q for one real-valued query"""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"M must be 2-D, got shape {M.shape}")
    q = check_vector(q, M.shape[0], name='query')
    return QueryWeights(M.T @ q)


def symmetric_query_weights(M_sym: np.ndarray, q_code: BinaryCode) -> QueryWeights:
    """Weights for the symmetric engine: the query is its own {-1, +1} code"""
    M_sym = np.asarray(M_sym, dtype=np.float64)
    if M_sym.ndim != 2 or M_sym.shape[0] != M_sym.shape[1]:
        raise DimensionError(f"symmetric similarity must be square, got shape {M_sym.shape}")
    if M_sym.shape[0] != q_code.nbits:
        raise DimensionError(f"{q_code.nbits}-bit query against a {M_sym.shape[0]}-bit model")
    return QueryWeights(M_sym.T @ q_code.to_signs())


def score_codes(w: QueryWeights, codes: np.ndarray) -> np.ndarray:
    """
    Score every row of a packed code matrix

    Byte contributions are accumulated in a fixed order, so a code gets the
    same float score wherever it is scored.
    """
    codes = np.ascontiguousarray(codes, dtype='<u8')
    if codes.ndim != 2 or codes.shape[1] != num_words(w.nbits):
        raise DimensionError(f"packed codes of shape {codes.shape} do not match {w.nbits}-bit weights")

    code_bytes = codes.view(np.uint8)
    acc = np.zeros(codes.shape[0], dtype=np.float64)
    for j in range(w.table.shape[0]):
        acc += w.table[j, code_bytes[:, j]]
    return acc


def score(w: QueryWeights, code: BinaryCode) -> float:
    """S(q, x) = sum_i w_i(x_i)"""
    if code.nbits != w.nbits:
        raise DimensionError(f"{code.nbits}-bit code against {w.nbits}-bit weights")
    return float(score_codes(w, code.words[None, :])[0])


def symmetric_score(M_sym: np.ndarray, q_code: BinaryCode, x_code: BinaryCode) -> float:
    """Bilinear form q^T M x over {-1, +1} codes"""
    M_sym = np.asarray(M_sym, dtype=np.float64)
    if M_sym.shape != (q_code.nbits, x_code.nbits):
        raise DimensionError(
            f"similarity of shape {M_sym.shape} does not fit codes of {q_code.nbits} and {x_code.nbits} bits"
        )
    return float(q_code.to_signs() @ M_sym @ x_code.to_signs())


@dataclass(frozen=True)
class CodeSnapshot:
    """Immutable prefix of a CodeDatabase"""
    ids: np.ndarray
    words: np.ndarray
    labels: Tuple[frozenset, ...]
    bits: int

    def __len__(self) -> int:
        return self.ids.shape[0]

    def code(self, position: int) -> BinaryCode:
        return BinaryCode(self.words[position], self.bits)


class CodeDatabase:
    """
    Append-only store of packed codes with record ids and label sets

    Codes are never rewritten. One appender at a time; readers work on
    snapshot() views that later appends cannot change.
    """

    def __init__(self, bits: int, capacity: int = 1024):
        if bits < 1:
            raise DimensionError(f"code length must be positive, got {bits}")
        self.bits = bits
        self._words = np.zeros((max(1, capacity), num_words(bits)), dtype=np.uint64)
        self._ids = np.zeros(max(1, capacity), dtype=np.int64)
        self._labels: List[frozenset] = []
        self._id_set = set()
        self._size = 0
        self._lock = threading.Lock()
        self._snapshot: Optional[CodeSnapshot] = None

    def __len__(self) -> int:
        return self._size

    def _reserve(self, needed: int) -> None:
        capacity = self._ids.shape[0]
        if needed <= capacity:
            return
        while capacity < needed:
            capacity *= 2
        words = np.zeros((capacity, self._words.shape[1]), dtype=np.uint64)
        ids = np.zeros(capacity, dtype=np.int64)
        words[:self._size] = self._words[:self._size]
        ids[:self._size] = self._ids[:self._size]
        self._words = words
        self._ids = ids

    def append(self, ids: Sequence[int], codes, labels: Optional[Sequence[Iterable[int]]] = None) -> None:
        """
        Append records

        Args:
            ids: Record ids, unique across the database
            codes: Packed (k, words) uint64 matrix or a list of BinaryCode
            labels: Optional label set per record
        """
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        if isinstance(codes, (list, tuple)) and codes and isinstance(codes[0], BinaryCode):
            for c in codes:
                if c.nbits != self.bits:
                    raise DimensionError(f"{c.nbits}-bit code appended to a {self.bits}-bit database")
            words = np.stack([c.words for c in codes])
        else:
            words = np.asarray(codes, dtype=np.uint64).reshape(-1, num_words(self.bits))

        if words.shape[0] != ids.shape[0]:
            raise DimensionError(f"{ids.shape[0]} ids for {words.shape[0]} codes")
        if labels is None:
            label_sets = [frozenset()] * ids.shape[0]
        else:
            label_sets = [frozenset(int(c) for c in ls) for ls in labels]
            if len(label_sets) != ids.shape[0]:
                raise DimensionError(f"{ids.shape[0]} ids for {len(label_sets)} label sets")

        with self._lock:
            new_ids = set(ids.tolist())
            if len(new_ids) != ids.shape[0] or new_ids & self._id_set:
                raise DataError("record ids must be unique")

            start, stop = self._size, self._size + ids.shape[0]
            self._reserve(stop)
            self._words[start:stop] = words
            self._ids[start:stop] = ids
            self._labels.extend(label_sets)
            self._id_set |= new_ids
            self._size = stop
            self._snapshot = None

    def snapshot(self) -> CodeSnapshot:
        with self._lock:
            if self._snapshot is None:
                words = self._words[:self._size]
                ids = self._ids[:self._size]
                words.setflags(write=False)
                ids.setflags(write=False)
                self._snapshot = CodeSnapshot(ids, words, tuple(self._labels), self.bits)
            return self._snapshot


def _as_snapshot(db) -> CodeSnapshot:
    return db.snapshot() if isinstance(db, CodeDatabase) else db


def top_k_order(primary: np.ndarray, ids: np.ndarray, K: Optional[int] = None) -> np.ndarray:
    """Positions ordered by ascending primary key, ties by ascending id, cut to K"""
    n = primary.shape[0]
    if K is None or K >= n:
        return np.lexsort((ids, primary))

    kth = np.partition(primary, K - 1)[K - 1]
    candidates = np.nonzero(primary <= kth)[0]
    order = np.lexsort((ids[candidates], primary[candidates]))
    return candidates[order][:K]


def _check_k(K: int) -> None:
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")


def rank_all(w: QueryWeights, db) -> Tuple[np.ndarray, np.ndarray]:
    """Full ranking: (ids, scores) by descending score, ties by ascending id"""
    snap = _as_snapshot(db)
    if snap.bits != w.nbits:
        raise DimensionError(f"{w.nbits}-bit weights against a {snap.bits}-bit database")
    scores = score_codes(w, snap.words)
    order = top_k_order(-scores, snap.ids)
    return snap.ids[order], scores[order]


def linear_scan_topk(w: QueryWeights, db, K: int) -> List[Tuple[int, float]]:
    """Exhaustive weighted scan; top-K (id, score) pairs"""
    _check_k(K)
    snap = _as_snapshot(db)
    if len(snap) == 0:
        return []
    if snap.bits != w.nbits:
        raise DimensionError(f"{w.nbits}-bit weights against a {snap.bits}-bit database")

    scores = score_codes(w, snap.words)
    order = top_k_order(-scores, snap.ids, K)
    return [(int(snap.ids[p]), float(scores[p])) for p in order]


def hamming_topk(q_code: BinaryCode, db, K: int) -> List[Tuple[int, int]]:
    """Plain Hamming ranking; top-K (id, distance) pairs"""
    _check_k(K)
    snap = _as_snapshot(db)
    if len(snap) == 0:
        return []
    if snap.bits != q_code.nbits:
        raise DimensionError(f"{q_code.nbits}-bit query against a {snap.bits}-bit database")

    distances = hamming_many(q_code, snap.words)
    order = top_k_order(distances, snap.ids, K)
    return [(int(snap.ids[p]), int(distances[p])) for p in order]


def symmetric_topk(M_sym: np.ndarray, q_code: BinaryCode, db, K: int) -> List[Tuple[int, float]]:
    """Symmetric engine: weighted scan with the query's own code"""
    return linear_scan_topk(symmetric_query_weights(M_sym, q_code), db, K)
