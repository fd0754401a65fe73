"""
Stream Loop - Chunked streaming orchestration
Feeds arriving chunks to the database and the learner, evaluating at checkpoints
"""

import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from src.audit_log import AuditLog
from src.errors import DegenerateInputError, EmptyLabelSetError
from src.hash_core import encode_batch
from src.online_learner import OnlineLearner, SimilaritySnapshot
from src.search import CodeDatabase, CodeSnapshot
from src.state import CheckpointRecord, ChunkRecord, StreamState


Evaluator = Callable[[CodeSnapshot, SimilaritySnapshot], Dict[str, Any]]


class StreamLoop:
    """
    Main stream loop - chunk arrival -> encode/append -> learn -> checkpoint

    Flow per chunk:
    1. Encode the chunk's new points and append them to the database
    2. Observe every point in arrival order (timed, learner thread only)
    3. Evaluate any checkpoint reached on the way
    4. Record the chunk's cost and step statistics

    Points that cannot drive an update (zero vector with positive loss, empty
    label set) are skipped and reported. Any other error is logged and raised.
    """

    def __init__(
        self,
        learner: OnlineLearner,
        database: CodeDatabase,
        chunk_size: int = 1000,
        evaluator: Optional[Evaluator] = None,
        eval_schedule: Optional[Sequence[int]] = None,
        audit_log: Optional[AuditLog] = None,
        debugger=None,
        simulate_io: bool = False,
        io_ms_per_1000: float = 3970.0,
        state: Optional[StreamState] = None
    ):
        """
        Initialize StreamLoop

        Args:
            learner: Single-writer learner owning the similarity model
            database: Code database receiving arriving points
            chunk_size: Points per chunk (transport unit, not a mini-batch)
            evaluator: Called with (database snapshot, model snapshot) at checkpoints
            eval_schedule: Point counts at which to evaluate
            audit_log: Optional AuditLog instance
            debugger: Optional Debugger instance
            simulate_io: Add the modeled transfer cost to chunk records
            io_ms_per_1000: Transfer cost per 1000 points
            state: Optional StreamState to fill (new one otherwise)
        """
        if chunk_size < 1:
            raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
        if database.bits != learner.hash_model.bits:
            raise ValueError(f"database holds {database.bits}-bit codes, hash model emits {learner.hash_model.bits}")

        self.learner = learner
        self.database = database
        self.chunk_size = chunk_size
        self.evaluator = evaluator
        self.eval_schedule = sorted({int(c) for c in eval_schedule}) if eval_schedule else []
        self.audit_log = audit_log
        self.debugger = debugger
        self.simulate_io = simulate_io
        self.io_ms_per_1000 = io_ms_per_1000
        self.state = state or StreamState(chunk_size)

        self._learn_ms = 0.0

    def run(
        self,
        features: np.ndarray,
        labels: Sequence[frozenset],
        ids: Optional[Sequence[int]] = None,
        already_appended: int = 0
    ) -> StreamState:
        """
        Stream every point through the loop

        Args:
            features: (n, D) points in arrival order
            labels: Label set per point
            ids: Record ids (default 0 .. n - 1)
            already_appended: Leading points the database already holds

        Returns:
            The filled StreamState
        """
        n = features.shape[0]
        ids = np.arange(n, dtype=np.int64) if ids is None else np.asarray(ids, dtype=np.int64)

        pending = [c for c in self.eval_schedule if c <= n]
        unreached = [c for c in self.eval_schedule if c > n]
        for c in unreached:
            self._report_unreached(c, n)

        if self.debugger:
            self.debugger.print("STREAM", f"Streaming {n} points in chunks of {self.chunk_size}")

        for chunk_index, start in enumerate(range(0, n, self.chunk_size)):
            stop = min(start + self.chunk_size, n)
            pending = self._evaluate_due(pending)

            if self.debugger:
                self.debugger.chunk_start(chunk_index, start, stop)

            arrive_from = max(start, already_appended)
            if arrive_from < stop:
                codes = encode_batch(self.learner.hash_model, features[arrive_from:stop])
                self.database.append(ids[arrive_from:stop], codes, labels[arrive_from:stop])

            record = ChunkRecord(chunk_index=chunk_index, start=start, stop=stop, learn_ms=0.0)
            for position in range(start, stop):
                pending = self._evaluate_due(pending)
                self._observe_point(position, features[position], labels[position], record)

            if self.simulate_io:
                record.io_ms = self.io_ms_per_1000 * (stop - start) / 1000.0
                record.rehash_io_ms = self.io_ms_per_1000 * stop / 1000.0

            self.state.add_chunk(record)

            if self.audit_log:
                self.audit_log.log_chunk(
                    chunk_index, record.points, record.learn_ms,
                    aggressive_rows=record.aggressive_rows,
                    skipped=record.skipped,
                    io_ms=record.io_ms
                )
            if self.debugger:
                self.debugger.chunk_end(chunk_index, record.learn_ms, record.aggressive_rows, record.skipped)

        self._evaluate_due(pending)
        return self.state

    def _observe_point(self, position: int, x: np.ndarray, label_set, record: ChunkRecord) -> None:
        started = time.perf_counter()
        try:
            result = self.learner.observe(x, label_set)
        except (DegenerateInputError, EmptyLabelSetError) as e:
            elapsed = (time.perf_counter() - started) * 1000.0
            record.skipped += 1
            self.state.skip_point(position)
            if self.audit_log:
                self.audit_log.log_error(type(e).__name__, str(e), {'position': position})
            if self.debugger:
                self.debugger.print("LEARNER", f"Skipped point {position}: {e}")
        except Exception as e:
            if self.debugger:
                self.debugger.execution_error(f"point {position}: {e}")
            if self.audit_log:
                self.audit_log.log_error(type(e).__name__, str(e), {'position': position})
            raise
        else:
            elapsed = (time.perf_counter() - started) * 1000.0
            record.aggressive_rows += result.aggressive_rows
            record.clipped_rows += result.clipped
            if result.passive:
                record.passive_points += 1

        record.learn_ms += elapsed
        self._learn_ms += elapsed
        self.state.points_observed += 1

    def _evaluate_due(self, pending: List[int]) -> List[int]:
        while pending and pending[0] <= self.state.points_observed:
            self._checkpoint(pending.pop(0))
        return pending

    def _checkpoint(self, checkpoint: int) -> None:
        db_snapshot = self.database.snapshot()
        model_snapshot = self.learner.snapshot()

        outcome: Dict[str, Any] = {}
        if self.evaluator is not None:
            outcome = self.evaluator(db_snapshot, model_snapshot)

        done = self.state.chunks
        record = CheckpointRecord(
            checkpoint=checkpoint,
            chunks=checkpoint / self.chunk_size,
            map=outcome.get('map'),
            cum_learn_ms=self._learn_ms,
            per_chunk_ms=(sum(c.learn_ms for c in done) / len(done)) if done else None,
            database_size=len(db_snapshot),
            queries_evaluated=outcome.get('queries', 0),
            map_hamming=outcome.get('map_hamming'),
        )
        self.state.add_checkpoint(record)

        if self.audit_log:
            self.audit_log.log_checkpoint(checkpoint, record.map, record.cum_learn_ms)
        if self.debugger:
            self.debugger.checkpoint(checkpoint, record.map, record.cum_learn_ms)

    def _report_unreached(self, checkpoint: int, n: int) -> None:
        self.state.unreached_checkpoints.append(checkpoint)
        message = f"checkpoint {checkpoint} is beyond the stream length {n}; skipped"
        if self.audit_log:
            self.audit_log.log_error('ScheduleError', message, {'checkpoint': checkpoint})
        if self.debugger:
            self.debugger.print("STREAM", message)

    def get_execution_summary(self) -> Dict[str, Any]:
        """Execution stats of the run so far"""
        chunks = self.state.chunks
        return {
            'points_observed': self.state.points_observed,
            'chunks': len(chunks),
            'checkpoints': len(self.state.checkpoints),
            'skipped': len(self.state.skipped_points),
            'cum_learn_ms': self._learn_ms,
            'mean_chunk_ms': (sum(c.learn_ms for c in chunks) / len(chunks)) if chunks else 0.0,
            'final_map': self.state.final_map,
        }
