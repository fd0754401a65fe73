"""
Online Learner - Passive-Aggressive similarity learning
Maintains U and V per streamed labeled point and publishes M = U^T V to readers
"""

import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from src.errors import ConcurrentWriterError, DataError, DegenerateInputError, DimensionError
from src.hash_core import BinaryCode, HashModel, check_vector, encode
from src.target_codes import TargetCodebook, target_for_labels


VARIANTS = ('asymmetric', 'symmetric')


def _check_pa_params(C: float, pa_norm_exponent: int) -> None:
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    if pa_norm_exponent not in (1, 2):
        raise ValueError(f"pa_norm_exponent must be 1 or 2, got {pa_norm_exponent}")


def _check_target(g) -> float:
    if g not in (1, -1):
        raise ValueError(f"target bit must be +1 or -1, got {g}")
    return float(g)


def step_size(loss, sq_norm: float, C: float, pa_norm_exponent: int = 2):
    """tau = min(C, loss / ||x||^p), p in {1, 2}"""
    denom = sq_norm if pa_norm_exponent == 2 else np.sqrt(sq_norm)
    return np.minimum(C, loss / denom)


def hinge_loss_u(u, x, g) -> float:
    """max(0, 1 - g u^T x)"""
    margin = float(g) * float(np.dot(u, x))
    return max(0.0, 1.0 - margin)


def pa_update_u(u, x, g, C: float, pa_norm_exponent: int = 2) -> np.ndarray:
    """
    PA-I step for one row of U

    Args:
        u: Current row (D,)
        x: Feature vector (D,)
        g: Target bit, +1 or -1
        C: Aggressiveness bound
        pa_norm_exponent: 2 for loss/||x||^2, 1 for loss/||x||

    Returns:
        Updated row; the input array itself when the loss is zero
    """
    _check_pa_params(C, pa_norm_exponent)
    g = _check_target(g)
    u = np.asarray(u, dtype=np.float64)
    x = check_vector(x, u.shape[0])

    loss = hinge_loss_u(u, x, g)
    if loss == 0.0:
        return u

    sq_norm = float(x @ x)
    if sq_norm == 0.0:
        raise DegenerateInputError("zero feature vector with positive hinge loss")

    tau = float(step_size(loss, sq_norm, C, pa_norm_exponent))
    return u + (tau * g) * x


def pa_update_v(v, code, g, C: float, pa_norm_exponent: int = 2) -> np.ndarray:
    """PA-I step for one row of V; the code is read as a {-1, +1} vector"""
    signs = code.to_signs() if isinstance(code, BinaryCode) else np.asarray(code, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if signs.shape != v.shape:
        raise DimensionError(f"code has {signs.shape[0]} bits, v has {v.shape[0]} entries")
    return pa_update_u(v, signs, g, C, pa_norm_exponent)


def materialize_m(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """M = U^T V, shape (D, b)"""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.ndim != 2 or V.ndim != 2 or U.shape[0] != V.shape[0]:
        raise DimensionError(f"U {U.shape} and V {V.shape} need the same number of rows")
    return U.T @ V


@dataclass
class SimilarityModel:
    """
    Learned bilinear similarity with factors U (l x D) and V (l x b)

    M is refreshed once per observe and is read-only between refreshes.
    """
    U: np.ndarray
    V: np.ndarray
    C: float = 0.01
    pa_norm_exponent: int = 2
    variant: str = 'asymmetric'
    update_count: int = 0
    M: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.U = np.array(self.U, dtype=np.float64)
        self.V = np.array(self.V, dtype=np.float64)
        _check_pa_params(self.C, self.pa_norm_exponent)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == 'symmetric' and self.U.shape[1] != self.V.shape[1]:
            raise DimensionError(f"symmetric model needs D == b, got D={self.U.shape[1]}, b={self.V.shape[1]}")
        self.refresh()

    @classmethod
    def zeros(
        cls,
        l: int,
        D: int,
        b: int,
        C: float = 0.01,
        pa_norm_exponent: int = 2,
        variant: str = 'asymmetric'
    ) -> 'SimilarityModel':
        if min(l, D, b) < 1:
            raise DimensionError(f"l, D and b must be positive, got {l}, {D}, {b}")
        return cls(np.zeros((l, D)), np.zeros((l, b)), C, pa_norm_exponent, variant)

    @property
    def l(self) -> int:
        return self.U.shape[0]

    @property
    def D(self) -> int:
        return self.U.shape[1]

    @property
    def b(self) -> int:
        return self.V.shape[1]

    def refresh(self) -> None:
        M = materialize_m(self.U, self.V)
        M.setflags(write=False)
        self.M = M

    def copy(self) -> 'SimilarityModel':
        return SimilarityModel(
            self.U.copy(), self.V.copy(), self.C, self.pa_norm_exponent,
            self.variant, self.update_count
        )


@dataclass(frozen=True)
class SimilaritySnapshot:
    """Immutable view of M after some prefix of the stream"""
    M: np.ndarray
    update_count: int
    variant: str = 'asymmetric'


@dataclass
class ObserveResult:
    """Per-point step statistics"""
    aggressive_u: int = 0
    aggressive_v: int = 0
    clipped: int = 0

    @property
    def passive(self) -> bool:
        return self.aggressive_u == 0 and self.aggressive_v == 0

    @property
    def aggressive_rows(self) -> int:
        return self.aggressive_u + self.aggressive_v


def _row_steps(W: np.ndarray, z: np.ndarray, g: np.ndarray, C: float, exponent: int):
    """Step sizes for every row of W against input z; zero where passive"""
    loss = np.maximum(0.0, 1.0 - g * (W @ z))
    active = loss > 0
    tau = np.zeros_like(loss)
    if active.any():
        sq_norm = float(z @ z)
        if sq_norm == 0.0:
            raise DegenerateInputError("zero feature vector with positive hinge loss")
        tau[active] = step_size(loss[active], sq_norm, C, exponent)
    return tau, active


def observe(
    model: SimilarityModel,
    x,
    labels: Iterable[int],
    hash_model: HashModel,
    codebook: TargetCodebook
) -> ObserveResult:
    """
    Feed one labeled point through every row of U and V

    The model is only modified once all checks pass, so a rejected point leaves
    it untouched.
    """
    if codebook.l != model.l:
        raise DimensionError(f"codebook length {codebook.l} does not match model l={model.l}")
    if hash_model.bits != model.b:
        raise DimensionError(f"hash model has {hash_model.bits} bits, model expects {model.b}")
    if model.variant == 'asymmetric' and hash_model.dim != model.D:
        raise DimensionError(f"hash model dimension {hash_model.dim} does not match model D={model.D}")

    x = check_vector(x, hash_model.dim)
    g = target_for_labels(codebook, labels).astype(np.float64)
    code_signs = encode(hash_model, x).to_signs()
    u_input = x if model.variant == 'asymmetric' else code_signs

    tau_u, active_u = _row_steps(model.U, u_input, g, model.C, model.pa_norm_exponent)
    tau_v, active_v = _row_steps(model.V, code_signs, g, model.C, model.pa_norm_exponent)

    if active_u.any():
        model.U[active_u] += (tau_u[active_u] * g[active_u])[:, None] * u_input[None, :]
    if active_v.any():
        model.V[active_v] += (tau_v[active_v] * g[active_v])[:, None] * code_signs[None, :]

    model.refresh()
    model.update_count += 1

    clipped = int(np.sum(active_u & (tau_u == model.C)) + np.sum(active_v & (tau_v == model.C)))
    return ObserveResult(int(active_u.sum()), int(active_v.sum()), clipped)


class OnlineLearner:
    """
    Single-writer owner of a SimilarityModel

    One thread calls observe; any number of threads read snapshot(). Each
    observe publishes a new snapshot by reference swap.
    """

    def __init__(
        self,
        model: SimilarityModel,
        hash_model: HashModel,
        codebook: TargetCodebook,
        grow_codebook: bool = False,
        debugger=None
    ):
        if codebook.l != model.l:
            raise DimensionError(f"codebook length {codebook.l} does not match model l={model.l}")
        if hash_model.bits != model.b:
            raise DimensionError(f"hash model has {hash_model.bits} bits, model expects {model.b}")

        self.model = model
        self.hash_model = hash_model
        self.codebook = codebook
        self.grow_codebook = grow_codebook
        self.debugger = debugger

        self._writer = threading.Lock()
        self._snapshot = SimilaritySnapshot(model.M, model.update_count, model.variant)

    @property
    def variant(self) -> str:
        return self.model.variant

    def snapshot(self) -> SimilaritySnapshot:
        return self._snapshot

    def observe(self, x, labels: Iterable[int]) -> ObserveResult:
        if not self._writer.acquire(blocking=False):
            raise ConcurrentWriterError("another thread is already updating this model")

        try:
            labels = {int(c) for c in labels}
            if self.grow_codebook and labels:
                grown = self.codebook.with_classes(labels)
                if grown is not self.codebook:
                    if self.debugger:
                        self.debugger.print("CODEBOOK", f"Codebook grew to {len(grown)} classes")
                    self.codebook = grown

            result = observe(self.model, x, labels, self.hash_model, self.codebook)
            self._snapshot = SimilaritySnapshot(self.model.M, self.model.update_count, self.model.variant)
            return result
        finally:
            self._writer.release()

    def observe_many(self, X, label_sets) -> list:
        """Observe rows in order; degenerate points are reported as None"""
        results = []
        for x, labels in zip(X, label_sets):
            try:
                results.append(self.observe(x, labels))
            except DataError as e:
                if isinstance(e, DimensionError):
                    raise
                if self.debugger:
                    self.debugger.print("LEARNER", f"Skipped point: {e}")
                results.append(None)
        return results
