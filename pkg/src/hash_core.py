"""
Hash Core - Fixed linear hash functions
Trains PCA-ITQ projections on the initial sample and encodes vectors to packed codes
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from src.errors import DegenerateSampleError, DimensionError, NonFiniteError


WORD_BITS = 64


def num_words(bits: int) -> int:
    """Number of 64-bit words holding a code of the given length"""
    return max(1, -(-bits // WORD_BITS))


def check_vector(x, dim: Optional[int] = None, name: str = 'feature vector') -> np.ndarray:
    """Validate a single feature vector and return it as float64"""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


def check_matrix(X, dim: Optional[int] = None, name: str = 'feature matrix') -> np.ndarray:
    """Validate a feature matrix (one row per point) and return it as float64"""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(f"{name} has dimension {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """
    Pack a boolean matrix into little-endian 64-bit words

    Bit i of a code lands in word i // 64 at position i % 64.

    Args:
        bits: Array of shape (n, b), truthy = +1

    Returns:
        uint64 array of shape (n, ceil(b / 64))
    """
    bits = np.asarray(bits, dtype=bool)
    if bits.ndim != 2:
        raise DimensionError(f"bit matrix must be 2-D, got shape {bits.shape}")

    n, b = bits.shape
    padded = np.zeros((n, num_words(b) * WORD_BITS), dtype=np.uint8)
    padded[:, :b] = bits
    packed = np.packbits(padded, axis=1, bitorder='little')
    return packed.view('<u8').astype(np.uint64)


def unpack_bits(words: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of pack_bits: (n, words) uint64 -> (n, bits) uint8 in {0, 1}"""
    words = np.ascontiguousarray(np.atleast_2d(words), dtype='<u8')
    unpacked = np.unpackbits(words.view(np.uint8), axis=1, bitorder='little')
    return unpacked[:, :bits]


def bits_to_signs(bits: np.ndarray) -> np.ndarray:
    """{0, 1} -> {-1, +1} as float64"""
    return np.where(np.asarray(bits) != 0, 1.0, -1.0)


class BinaryCode:
    """
    A b-bit hash code stored bit-packed

    Semantic value of bit i is +1 if set, -1 if clear.
    """

    __slots__ = ('words', 'nbits')

    def __init__(self, words: np.ndarray, nbits: int):
        words = np.array(words, dtype=np.uint64).reshape(-1)
        if nbits < 1:
            raise DimensionError(f"code length must be positive, got {nbits}")
        if words.shape[0] != num_words(nbits):
            raise DimensionError(
                f"{nbits}-bit code needs {num_words(nbits)} words, got {words.shape[0]}"
            )
        words.setflags(write=False)
        self.words = words
        self.nbits = nbits

    @classmethod
    def from_signs(cls, signs) -> 'BinaryCode':
        """Build from a {-1, +1} (or any real, >= 0 maps to +1) vector"""
        signs = np.asarray(signs)
        return cls(pack_bits((signs >= 0)[None, :])[0], signs.shape[0])

    def to_bits(self) -> np.ndarray:
        return unpack_bits(self.words[None, :], self.nbits)[0]

    def to_signs(self) -> np.ndarray:
        return bits_to_signs(self.to_bits())

    def complement(self) -> 'BinaryCode':
        return BinaryCode.from_signs(-self.to_signs())

    def __len__(self) -> int:
        return self.nbits

    def __eq__(self, other) -> bool:
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return self.nbits == other.nbits and np.array_equal(self.words, other.words)

    def __hash__(self) -> int:
        return hash((self.nbits, self.words.tobytes()))

    def __repr__(self) -> str:
        bits = ''.join('1' if v else '0' for v in self.to_bits())
        return f"BinaryCode({bits})"


@dataclass(frozen=True)
class HashModel:
    """
    Fixed hash functions: code = sgn(W^T x + t)

    Immutable after construction; safe to share between threads.
    """
    W: np.ndarray
    t: np.ndarray
    rotation: Optional[np.ndarray] = None
    itq_errors: Tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        t = np.array(self.t, dtype=np.float64).reshape(-1)

        if W.ndim != 2:
            raise DimensionError(f"W must be 2-D, got shape {W.shape}")
        if t.shape[0] != W.shape[1]:
            raise DimensionError(f"threshold has {t.shape[0]} entries, W has {W.shape[1]} columns")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(t))):
            raise NonFiniteError("hash model contains non-finite values")

        W.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, 'W', W)
        object.__setattr__(self, 't', t)

        if self.rotation is not None:
            R = np.array(self.rotation, dtype=np.float64)
            R.setflags(write=False)
            object.__setattr__(self, 'rotation', R)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def bits(self) -> int:
        return self.W.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, HashModel):
            return NotImplemented
        return np.array_equal(self.W, other.W) and np.array_equal(self.t, other.t)


def quantization_error(V: np.ndarray, R: np.ndarray) -> float:
    """ITQ objective ||sgn(VR) - VR||_F^2"""
    VR = V @ R
    B = np.where(VR >= 0, 1.0, -1.0)
    return float(np.sum((B - VR) ** 2))


def _principal_directions(Xc: np.ndarray, bits: int) -> np.ndarray:
    n, dim = Xc.shape
    cov = (Xc.T @ Xc) / n
    evals, evecs = np.linalg.eigh(cov)

    order = np.argsort(evals, kind='stable')[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    largest = max(float(evals[0]), 0.0)
    tol = largest * max(n, dim) * np.finfo(np.float64).eps
    rank = int(np.sum(evals > tol)) if largest > 0 else 0
    if rank < bits:
        raise DegenerateSampleError(
            f"initial sample covariance has rank {rank}, need at least {bits} for {bits} bits"
        )

    P = evecs[:, :bits].copy()
    # eigenvector signs are arbitrary; pin the largest-magnitude entry positive
    pivots = np.argmax(np.abs(P), axis=0)
    signs = np.sign(P[pivots, np.arange(bits)])
    signs[signs == 0] = 1.0
    return P * signs


def train_itq(
    sample,
    bits: int,
    iterations: int = 50,
    rng_seed: int = 0,
    debugger=None
) -> HashModel:
    """
    Learn PCA-ITQ hash functions from an initial sample

    Args:
        sample: (n, D) feature matrix
        bits: Code length b (<= D, <= n)
        iterations: Alternating sign/rotation updates; 0 gives pure PCA
        rng_seed: Seed for the initial random rotation
        debugger: Optional Debugger instance

    Returns:
        HashModel with W = P R and t = -W^T mean
    """

    X = check_matrix(sample, name='initial sample')
    n, dim = X.shape

    if bits < 1 or bits > dim:
        raise DimensionError(f"bits must be in [1, {dim}], got {bits}")
    if n < bits:
        raise DegenerateSampleError(f"initial sample has {n} points, need at least {bits}")
    if iterations < 0:
        raise ValueError(f"iterations must be non-negative, got {iterations}")

    mean = X.mean(axis=0)
    Xc = X - mean
    P = _principal_directions(Xc, bits)
    V = Xc @ P

    if iterations == 0:
        R = np.eye(bits)
    else:
        rng = np.random.default_rng(rng_seed)
        R, _ = np.linalg.qr(rng.standard_normal((bits, bits)))

    errors: List[float] = []
    for iteration in range(iterations):
        B = np.where(V @ R >= 0, 1.0, -1.0)
        left, _, right_t = linalg.svd(V.T @ B)
        R = left @ right_t
        error = float(np.sum((B - V @ R) ** 2))
        errors.append(error)

        if debugger:
            debugger.itq_iteration(iteration, error)

    W = P @ R
    t = -(W.T @ mean)

    if debugger:
        debugger.hash_trained(dim, bits, n, errors[-1] if errors else None)

    return HashModel(W=W, t=t, rotation=R, itq_errors=tuple(errors))


def encode(model: HashModel, x) -> BinaryCode:
    """Encode one feature vector: bit i = +1 iff (W^T x + t)_i >= 0"""
    x = check_vector(x, model.dim)
    projected = model.W.T @ x + model.t
    return BinaryCode(pack_bits((projected >= 0)[None, :])[0], model.bits)


def encode_batch(model: HashModel, X) -> np.ndarray:
    """Encode every row of X; returns packed (n, words) uint64"""
    X = check_matrix(X, model.dim)
    projected = X @ model.W + model.t
    return pack_bits(projected >= 0)


def hamming(a: BinaryCode, b: BinaryCode) -> int:
    """Number of differing bits"""
    if a.nbits != b.nbits:
        raise DimensionError(f"code lengths differ: {a.nbits} vs {b.nbits}")
    return int(np.bitwise_count(a.words ^ b.words).sum())


def hamming_many(query: BinaryCode, codes: np.ndarray) -> np.ndarray:
    """Hamming distance from one code to each row of a packed code matrix"""
    codes = np.asarray(codes, dtype=np.uint64)
    if codes.ndim != 2 or codes.shape[1] != query.words.shape[0]:
        raise DimensionError(
            f"packed codes of shape {codes.shape} do not match a {query.nbits}-bit query"
        )
    return np.bitwise_count(codes ^ query.words).sum(axis=1, dtype=np.int64)
