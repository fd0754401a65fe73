"""
Target Codes - Hadamard codebook
Assigns an l-bit target code to every class and aggregates codes of multi-label points
"""

from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from src.errors import CodebookExhaustedError, EmptyLabelSetError, UnknownClassError


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    order = 1
    while order < n:
        order *= 2
    return order


def build_hadamard(n: int) -> np.ndarray:
    """
    Sylvester construction: H_1 = [1], H_2k = [[H_k, H_k], [H_k, -H_k]]

    Args:
        n: Order, a power of two

    Returns:
        (n, n) int64 matrix with H^T H = n I
    """
    if not isinstance(n, (int, np.integer)) or not is_power_of_two(int(n)):
        raise ValueError(f"Hadamard order must be a power of two, got {n}")

    H = np.array([[1]], dtype=np.int64)
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H


def _usable(truncated: np.ndarray) -> bool:
    return truncated.size == 1 or not np.all(truncated == truncated[0])


def _pick_columns(
    H: np.ndarray,
    l: int,
    candidates: np.ndarray,
    count: int,
    taken: Sequence[np.ndarray] = ()
) -> List[int]:
    """
    Walk candidates in order, filling count slots in three passes

    First pass keeps columns whose first l entries are orthogonal to every
    accepted code. Second pass keeps new non-constant truncations. Last pass
    takes any remaining column, so truncations may repeat while the full
    columns stay distinct.
    """
    accepted = [np.asarray(code, dtype=np.int64) for code in taken]
    chosen: List[int] = []

    def take(column: int) -> None:
        chosen.append(int(column))
        accepted.append(H[:l, column].astype(np.int64))

    for column in candidates:
        if len(chosen) == count:
            return chosen
        truncated = H[:l, column].astype(np.int64)
        if _usable(truncated) and all(int(truncated @ code) == 0 for code in accepted):
            take(column)

    keys = {code.tobytes() for code in accepted}
    for column in candidates:
        if len(chosen) == count:
            return chosen
        truncated = H[:l, column].astype(np.int64)
        if column in chosen or not _usable(truncated) or truncated.tobytes() in keys:
            continue
        keys.add(truncated.tobytes())
        take(column)

    for column in candidates:
        if len(chosen) == count:
            break
        if column not in chosen:
            take(column)
    return chosen


class TargetCodebook:
    """
    Class id -> {-1, +1}^l target codes taken from Hadamard columns

    Immutable; with_classes returns a new codebook.
    """

    def __init__(self, l: int, order: int, rng_seed: int, columns: Mapping[int, int]):
        if l < 1:
            raise ValueError(f"target code length must be positive, got {l}")
        if l > order:
            raise ValueError(f"target length {l} exceeds Hadamard order {order}")

        self.l = l
        self.order = order
        self.rng_seed = rng_seed
        self._hadamard = build_hadamard(order)
        self._columns: Dict[int, int] = {int(c): int(col) for c, col in sorted(columns.items())}

        codes = {}
        for class_id, column in self._columns.items():
            code = self._hadamard[:l, column].astype(np.int8)
            code.setflags(write=False)
            codes[class_id] = code
        self._codes = codes

    @classmethod
    def for_classes(cls, class_ids: Iterable[int], l: int, rng_seed: int = 0) -> 'TargetCodebook':
        """
        Assign a distinct Hadamard column to each class id

        The order is the smallest power of two >= max(l, classes + 1); the
        all-ones first column is never used. Columns are drawn in a
        seed-deterministic random order and truncated to their first l entries;
        truncations that stay mutually orthogonal are taken first. Never runs
        out: the order always leaves one unused column per class.
        """
        ids = sorted({int(c) for c in class_ids})
        if not ids:
            raise ValueError("codebook needs at least one class")
        if l < 1:
            raise ValueError(f"target code length must be positive, got {l}")

        order = next_power_of_two(max(l, len(ids) + 1))
        H = build_hadamard(order)

        rng = np.random.default_rng(rng_seed)
        candidates = rng.permutation(np.arange(1, order))
        chosen = _pick_columns(H, l, candidates, len(ids))

        return cls(l, order, rng_seed, dict(zip(ids, chosen)))

    def with_classes(self, class_ids: Iterable[int]) -> 'TargetCodebook':
        """Return a codebook that also covers unseen class ids; existing codes are kept"""
        unseen = sorted({int(c) for c in class_ids} - set(self._columns))
        if not unseen:
            return self

        used = set(self._columns.values())
        rng = np.random.default_rng([self.rng_seed, len(self._columns)])
        free = np.array([c for c in range(1, self.order) if c not in used], dtype=np.int64)
        candidates = rng.permutation(free) if free.size else free
        chosen = _pick_columns(self._hadamard, self.l, candidates, len(unseen), list(self._codes.values()))

        if len(chosen) < len(unseen):
            raise CodebookExhaustedError(
                f"Hadamard order {self.order} has no unused column left for classes {unseen}"
            )

        columns = dict(self._columns)
        columns.update(zip(unseen, chosen))
        return TargetCodebook(self.l, self.order, self.rng_seed, columns)

    @property
    def class_codes(self) -> Mapping[int, np.ndarray]:
        return MappingProxyType(self._codes)

    @property
    def columns(self) -> Mapping[int, int]:
        return MappingProxyType(self._columns)

    @property
    def class_ids(self) -> List[int]:
        return list(self._columns)

    def __len__(self) -> int:
        return len(self._columns)

    def __contains__(self, class_id) -> bool:
        return int(class_id) in self._columns

    def code(self, class_id: int) -> np.ndarray:
        try:
            return self._codes[int(class_id)]
        except KeyError:
            raise UnknownClassError(f"class {class_id} has no target code")

    def full_code(self, class_id: int) -> np.ndarray:
        """The untruncated Hadamard column of a class"""
        self.code(class_id)
        return self._hadamard[:, self._columns[int(class_id)]].copy()

    def __eq__(self, other) -> bool:
        if not isinstance(other, TargetCodebook):
            return NotImplemented
        return (
            self.l == other.l
            and self.order == other.order
            and self.rng_seed == other.rng_seed
            and self._columns == other._columns
        )

    def __repr__(self) -> str:
        return f"TargetCodebook(l={self.l}, order={self.order}, classes={len(self)})"


def assign_class_codes(num_classes: int, l: int, rng_seed: int = 0) -> TargetCodebook:
    """Codebook for class ids 0 .. num_classes - 1"""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    return TargetCodebook.for_classes(range(num_classes), l, rng_seed)


def target_for_labels(codebook: TargetCodebook, labels: Iterable[int]) -> np.ndarray:
    """
    Componentwise majority of the member codes; ties go to +1

    Returns:
        int8 vector in {-1, +1}^l
    """
    label_set = {int(c) for c in labels}
    if not label_set:
        raise EmptyLabelSetError("target code requested for an empty label set")

    total = np.zeros(codebook.l, dtype=np.int64)
    for class_id in sorted(label_set):
        total += codebook.code(class_id)

    return np.where(total >= 0, 1, -1).astype(np.int8)
