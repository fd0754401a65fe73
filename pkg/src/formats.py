"""
Formats - Artifact file codecs
Binary hash model, similarity model, code database and feature files; text labels
"""

import hashlib
import struct
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from src.errors import FormatError
from src.hash_core import HashModel, num_words
from src.online_learner import VARIANTS, SimilarityModel
from src.search import CodeDatabase, CodeSnapshot
from src.target_codes import TargetCodebook


FORMAT_VERSION = 1

HASH_MAGIC = b'OHSL'
SIM_MAGIC = b'OHSM'
DB_MAGIC = b'OHDB'
FEATURE_MAGIC = b'OHFV'

FORMAT_VERSIONS = {
    'hash_model': FORMAT_VERSION,
    'similarity_model': FORMAT_VERSION,
    'database': FORMAT_VERSION,
    'features': FORMAT_VERSION,
}

_HASH_HEADER = struct.Struct('<4sHII')          # magic, version, D, b
_SIM_HEADER = struct.Struct('<4sHIIIdBB')       # magic, version, l, D, b, C, norm exponent, variant
_CODEBOOK_HEADER = struct.Struct('<IQI')        # order, seed, classes
_CODEBOOK_ENTRY = struct.Struct('<qI')          # class id, column
_DB_HEADER = struct.Struct('<4sHQI')            # magic, version, n, b
_FEATURE_HEADER = struct.Struct('<4sII')        # magic, n, D
_U64 = struct.Struct('<Q')


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def _write_bytes(path: str, chunks: Iterable[bytes]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        for chunk in chunks:
            f.write(chunk)


class _Reader:
    """Sequential little-endian reader that reports byte offsets on failure"""

    def __init__(self, path: str):
        self.path = str(path)
        self.data = Path(path).read_bytes()
        self.offset = 0

    def fail(self, message: str) -> FormatError:
        return FormatError(message, path=self.path, offset=self.offset)

    def unpack(self, layout: struct.Struct) -> tuple:
        if self.offset + layout.size > len(self.data):
            raise self.fail(f"truncated file: need {layout.size} bytes")
        values = layout.unpack_from(self.data, self.offset)
        self.offset += layout.size
        return values

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        if self.offset + size > len(self.data):
            raise self.fail(f"truncated file: need {size} bytes of {dtype}")
        values = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.offset).copy()
        self.offset += size
        return values

    def header(self, layout: struct.Struct, magic: bytes) -> tuple:
        values = self.unpack(layout)
        if values[0] != magic:
            self.offset = 0
            raise self.fail(f"bad magic {values[0]!r}, expected {magic!r}")
        return values

    def version(self, version: int) -> None:
        if version != FORMAT_VERSION:
            raise self.fail(f"unsupported format version {version}")

    def finish(self) -> None:
        if self.offset != len(self.data):
            raise self.fail(f"{len(self.data) - self.offset} trailing bytes")


def _f64(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype='<f8').tobytes()


# === Hash model ===

def save_hash_model(model: HashModel, path: str) -> None:
    _write_bytes(path, [
        _HASH_HEADER.pack(HASH_MAGIC, FORMAT_VERSION, model.dim, model.bits),
        _f64(model.W),
        _f64(model.t),
    ])


def load_hash_model(path: str) -> HashModel:
    reader = _Reader(path)
    _, version, dim, bits = reader.header(_HASH_HEADER, HASH_MAGIC)
    reader.version(version)
    W = reader.array('<f8', dim * bits).reshape(dim, bits)
    t = reader.array('<f8', bits)
    reader.finish()
    return HashModel(W=W.astype(np.float64), t=t.astype(np.float64))


# === Similarity model ===

def save_similarity_model(model: SimilarityModel, codebook: TargetCodebook, path: str) -> None:
    columns = codebook.columns
    chunks = [
        _SIM_HEADER.pack(
            SIM_MAGIC, FORMAT_VERSION, model.l, model.D, model.b, model.C,
            model.pa_norm_exponent, VARIANTS.index(model.variant)
        ),
        _f64(model.U),
        _f64(model.V),
        _CODEBOOK_HEADER.pack(codebook.order, codebook.rng_seed, len(columns)),
    ]
    chunks.extend(_CODEBOOK_ENTRY.pack(class_id, column) for class_id, column in sorted(columns.items()))
    chunks.append(_U64.pack(model.update_count))
    _write_bytes(path, chunks)


def load_similarity_model(path: str) -> Tuple[SimilarityModel, TargetCodebook]:
    reader = _Reader(path)
    _, version, l, D, b, C, exponent, variant = reader.header(_SIM_HEADER, SIM_MAGIC)
    reader.version(version)
    if variant >= len(VARIANTS):
        raise reader.fail(f"unknown variant flag {variant}")

    U = reader.array('<f8', l * D).reshape(l, D)
    V = reader.array('<f8', l * b).reshape(l, b)
    order, seed, count = reader.unpack(_CODEBOOK_HEADER)
    columns = {}
    for _ in range(count):
        class_id, column = reader.unpack(_CODEBOOK_ENTRY)
        columns[class_id] = column
    (update_count,) = reader.unpack(_U64)
    reader.finish()

    try:
        codebook = TargetCodebook(l, order, seed, columns)
        model = SimilarityModel(
            U.astype(np.float64), V.astype(np.float64), C, exponent,
            VARIANTS[variant], update_count
        )
    except ValueError as e:
        raise FormatError(str(e), path=str(path))
    return model, codebook


# === Code database ===

def save_database(db, path: str) -> None:
    snap: CodeSnapshot = db.snapshot() if isinstance(db, CodeDatabase) else db
    label_lists = [sorted(ls) for ls in snap.labels]
    offsets = np.zeros(len(snap) + 1, dtype='<u8')
    if label_lists:
        offsets[1:] = np.cumsum([len(ls) for ls in label_lists])
    values = np.array([c for ls in label_lists for c in ls], dtype='<i8')

    _write_bytes(path, [
        _DB_HEADER.pack(DB_MAGIC, FORMAT_VERSION, len(snap), snap.bits),
        np.ascontiguousarray(snap.words, dtype='<u8').tobytes(),
        np.ascontiguousarray(snap.ids, dtype='<i8').tobytes(),
        offsets.tobytes(),
        values.tobytes(),
    ])


def load_database(path: str) -> CodeDatabase:
    reader = _Reader(path)
    _, version, n, bits = reader.header(_DB_HEADER, DB_MAGIC)
    reader.version(version)
    if bits < 1:
        raise reader.fail(f"invalid code length {bits}")

    words = reader.array('<u8', n * num_words(bits)).reshape(n, num_words(bits))
    ids = reader.array('<i8', n)
    offsets = reader.array('<u8', n + 1).astype(np.int64)
    if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
        raise reader.fail("label offsets must start at 0 and never decrease")
    values = reader.array('<i8', int(offsets[-1]))
    reader.finish()

    labels = [frozenset(int(c) for c in values[offsets[i]:offsets[i + 1]]) for i in range(n)]
    db = CodeDatabase(bits, capacity=max(1, n))
    if n:
        db.append(ids, words.astype(np.uint64), labels)
    return db


# === Features ===

def write_features(X: np.ndarray, path: str, fmt: str = 'ohfv') -> None:
    X = np.asarray(X, dtype=np.float64)
    if fmt == 'csv':
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            for row in X:
                f.write(','.join(repr(float(v)) for v in row) + '\n')
        return
    if fmt != 'ohfv':
        raise ValueError(f"unknown feature format {fmt!r}")

    _write_bytes(path, [
        _FEATURE_HEADER.pack(FEATURE_MAGIC, X.shape[0], X.shape[1]),
        np.ascontiguousarray(X, dtype='<f4').tobytes(),
    ])


def _read_csv_features(path: str) -> np.ndarray:
    rows: List[List[float]] = []
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = [float(v) for v in line.strip().split(',')]
            except ValueError as e:
                raise FormatError(str(e), path=str(path), line=lineno)
            if rows and len(row) != len(rows[0]):
                raise FormatError(
                    f"row has {len(row)} values, previous rows have {len(rows[0])}",
                    path=str(path), line=lineno
                )
            rows.append(row)

    if not rows:
        raise FormatError("no feature rows", path=str(path))
    return np.array(rows, dtype=np.float64)


def read_features(path: str) -> np.ndarray:
    """OHFV binary (detected by magic) or CSV; returns float64 (n, D)"""
    with open(path, 'rb') as f:
        head = f.read(len(FEATURE_MAGIC))
    if head != FEATURE_MAGIC:
        return _read_csv_features(path)

    reader = _Reader(path)
    _, n, dim = reader.header(_FEATURE_HEADER, FEATURE_MAGIC)
    X = reader.array('<f4', n * dim).reshape(n, dim)
    reader.finish()
    return X.astype(np.float64)


# === Labels ===

def read_labels(path: str) -> List[frozenset]:
    """One line of comma-separated class ids per record; a blank line is an empty set"""
    labels: List[frozenset] = []
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            text = line.strip()
            if not text:
                labels.append(frozenset())
                continue
            try:
                labels.append(frozenset(int(v) for v in text.split(',')))
            except ValueError as e:
                raise FormatError(str(e), path=str(path), line=lineno)
    return labels


def write_labels(labels: Sequence[Iterable[int]], path: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for label_set in labels:
            f.write(','.join(str(c) for c in sorted(label_set)) + '\n')
