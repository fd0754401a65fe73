"""
Engine - Component wiring
Builds hash model, codebook, learner, database and stream loop from configuration
"""

import time
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from src.audit_log import AuditLog
from src.debugger import DebugConfig
from src.errors import DataError, DimensionError
from src.hash_core import HashModel, check_matrix, train_itq
from src.online_learner import OnlineLearner, SimilarityModel
from src.search import CodeDatabase
from src.state import StreamState
from src.stream_loop import Evaluator, StreamLoop
from src.target_codes import TargetCodebook


@dataclass
class StreamResult:
    """Everything a finished stream leaves behind"""
    state: StreamState
    learner: OnlineLearner
    database: CodeDatabase
    hash_model: HashModel

    @property
    def model(self) -> SimilarityModel:
        return self.learner.model

    @property
    def codebook(self) -> TargetCodebook:
        return self.learner.codebook


def default_schedule(n: int, chunk_size: int, eval_every: Optional[int] = None) -> List[int]:
    """Checkpoints every eval_every points (plus the end), or at every chunk end"""
    if n == 0:
        return [0]
    if eval_every:
        points = list(range(eval_every, n + 1, eval_every))
    else:
        points = [min(start + chunk_size, n) for start in range(0, n, chunk_size)]
    if points[-1] != n:
        points.append(n)
    return points


class Engine:
    """
    Integrated engine - full system combining all components

    Components:
    - HashModel: PCA-ITQ hash functions trained on the initial sample
    - TargetCodebook: Hadamard target codes per class
    - OnlineLearner: PA updates of U and V (single writer)
    - CodeDatabase: append-only packed codes
    - StreamLoop: chunked orchestration with checkpoints
    - AuditLog / Debugger: run logging
    """

    def __init__(self, config: Dict[str, Any], debugger=None, audit_log: Optional[AuditLog] = None):
        """
        Initialize engine

        Args:
            config: Configuration dictionary with sections:
              - hash: bits, iterations, init_sample, seed
              - learner: C, l_mult, target_len, pa_norm_exponent, variant, grow_codebook
              - stream: chunk_size, eval_every, simulate_io, io_ms_per_1000
              - audit: enabled, log_path
              - debug: enabled, level, log_file
            debugger: Debugger to use instead of one built from config
            audit_log: AuditLog to use instead of one built from config
        """
        self.config = config
        self.debugger = debugger if debugger is not None else DebugConfig.from_dict(config)

        if audit_log is not None:
            self.audit_log = audit_log
        elif config.get('audit', {}).get('enabled', True):
            self.audit_log = AuditLog(log_file=config.get('audit', {}).get('log_path'))
        else:
            self.audit_log = None

    @property
    def seed(self) -> int:
        return int(self.config.get('hash', {}).get('seed', 0))

    def train_hash(self, features: np.ndarray) -> HashModel:
        """Train hash functions on the first init_sample points"""
        hash_config = self.config.get('hash', {})
        bits = hash_config.get('bits', 32)
        sample = hash_config.get('init_sample', 300)

        X = check_matrix(features)
        if sample > X.shape[0]:
            raise DataError(f"initial sample of {sample} points requested but only {X.shape[0]} available")
        if sample < bits:
            raise DataError(f"initial sample of {sample} points cannot train {bits} bits")

        return train_itq(
            X[:sample],
            bits,
            iterations=hash_config.get('iterations', 50),
            rng_seed=self.seed,
            debugger=self.debugger
        )

    def target_len(self, bits: int) -> int:
        learner_config = self.config.get('learner', {})
        explicit = learner_config.get('target_len')
        return int(explicit) if explicit else int(learner_config.get('l_mult', 3)) * bits

    def build_codebook(self, class_ids: Iterable[int], bits: int) -> TargetCodebook:
        class_ids = sorted({int(c) for c in class_ids})
        if not class_ids:
            raise DataError("no class labels in the stream")

        codebook = TargetCodebook.for_classes(class_ids, self.target_len(bits), self.seed)
        self.debugger.print(
            "CODEBOOK",
            f"{len(codebook)} classes, l={codebook.l}, Hadamard order {codebook.order}"
        )
        return codebook

    def build_learner(self, hash_model: HashModel, class_ids: Iterable[int]) -> OnlineLearner:
        learner_config = self.config.get('learner', {})
        variant = learner_config.get('variant', 'asymmetric')
        codebook = self.build_codebook(class_ids, hash_model.bits)

        D = hash_model.dim if variant == 'asymmetric' else hash_model.bits
        model = SimilarityModel.zeros(
            codebook.l, D, hash_model.bits,
            C=learner_config.get('C', 0.01),
            pa_norm_exponent=learner_config.get('pa_norm_exponent', 2),
            variant=variant
        )
        return OnlineLearner(
            model, hash_model, codebook,
            grow_codebook=learner_config.get('grow_codebook', True),
            debugger=self.debugger
        )

    def stream(
        self,
        features: np.ndarray,
        labels: Sequence[Iterable[int]],
        hash_model: HashModel,
        ids: Optional[Sequence[int]] = None,
        learner: Optional[OnlineLearner] = None,
        database: Optional[CodeDatabase] = None,
        already_appended: int = 0,
        evaluator: Optional[Evaluator] = None,
        eval_schedule: Optional[Sequence[int]] = None
    ) -> StreamResult:
        """
        Run the chunked stream over a labeled dataset

        Args:
            features: (n, D) points in arrival order
            labels: Label set per point
            hash_model: Fixed hash functions
            ids: Record ids (default 0 .. n - 1)
            learner: Existing learner (built from config otherwise)
            database: Existing database (empty otherwise)
            already_appended: Leading points the database already holds
            evaluator: Checkpoint evaluator
            eval_schedule: Checkpoints (default from the stream section)

        Returns:
            StreamResult
        """
        X = check_matrix(features, hash_model.dim)
        label_sets = [frozenset(int(c) for c in ls) for ls in labels]
        if len(label_sets) != X.shape[0]:
            raise DimensionError(f"{X.shape[0]} feature rows but {len(label_sets)} label sets")

        stream_config = self.config.get('stream', {})
        chunk_size = stream_config.get('chunk_size', 1000)

        if learner is None:
            learner = self.build_learner(hash_model, set().union(*label_sets) if label_sets else ())
        if database is None:
            database = CodeDatabase(hash_model.bits, capacity=max(1, X.shape[0]))
        if eval_schedule is None:
            eval_schedule = default_schedule(X.shape[0], chunk_size, stream_config.get('eval_every'))

        loop = StreamLoop(
            learner=learner,
            database=database,
            chunk_size=chunk_size,
            evaluator=evaluator,
            eval_schedule=eval_schedule,
            audit_log=self.audit_log,
            debugger=self.debugger,
            simulate_io=stream_config.get('simulate_io', False),
            io_ms_per_1000=stream_config.get('io_ms_per_1000', 3970.0)
        )

        started = time.time()
        state = loop.run(X, label_sets, ids=ids, already_appended=already_appended)
        self.debugger.execution_complete("stream", time.time() - started)
        self.debugger.print_dict("ENGINE", "Stream summary", loop.get_execution_summary())

        return StreamResult(state, learner, database, hash_model)
