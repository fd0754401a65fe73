"""
State - Stream run state
Tracks chunks processed and checkpoints evaluated during a single streaming run
"""

from dataclasses import dataclass, asdict, field
from typing import List, Dict, Any, Optional
from datetime import datetime
import json


@dataclass
class ChunkRecord:
    """One chunk of the stream after the learner has seen it"""
    chunk_index: int
    start: int
    stop: int
    learn_ms: float
    aggressive_rows: int = 0
    clipped_rows: int = 0
    passive_points: int = 0
    skipped: int = 0
    io_ms: float = 0.0
    rehash_io_ms: float = 0.0

    @property
    def points(self) -> int:
        return self.stop - self.start

    def to_dict(self) -> Dict[str, Any]:
        return {'points': self.points, **asdict(self)}


@dataclass
class CheckpointRecord:
    """mAP measured after a prefix of the stream"""
    checkpoint: int  # points observed
    chunks: float  # checkpoint / chunk_size
    map: Optional[float]
    cum_learn_ms: float
    per_chunk_ms: Optional[float]
    database_size: int = 0
    queries_evaluated: int = 0
    map_hamming: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def deterministic_dict(self) -> Dict[str, Any]:
        """Fields that reproduce exactly under fixed seeds (timing removed)"""
        data = self.to_dict()
        data.pop('cum_learn_ms')
        data.pop('per_chunk_ms')
        return data


class StreamState:
    """
    State for a single streaming run

    Tracks:
    - Points observed so far
    - Chunk records (learner cost, step statistics)
    - Checkpoint records (mAP timeline)
    - Skipped points and schedule points that never came
    """

    def __init__(self, chunk_size: int = 1000):
        self.chunk_size = chunk_size
        self.points_observed = 0
        self.chunks: List[ChunkRecord] = []
        self.checkpoints: List[CheckpointRecord] = []
        self.skipped_points: List[int] = []
        self.unreached_checkpoints: List[int] = []
        self.created_at = datetime.now().isoformat()

    def add_chunk(self, record: ChunkRecord) -> None:
        self.chunks.append(record)

    def add_checkpoint(self, record: CheckpointRecord) -> None:
        self.checkpoints.append(record)

    def skip_point(self, position: int) -> None:
        self.skipped_points.append(position)

    @property
    def cum_learn_ms(self) -> float:
        return sum(c.learn_ms for c in self.chunks)

    @property
    def per_chunk_ms(self) -> List[float]:
        return [c.learn_ms for c in self.chunks]

    @property
    def final_map(self) -> Optional[float]:
        for record in reversed(self.checkpoints):
            if record.map is not None:
                return record.map
        return None

    def timeline(self) -> List[Dict[str, Any]]:
        return [c.to_dict() for c in self.checkpoints]

    def to_dict(self) -> Dict[str, Any]:
        """Serialize state to dictionary"""
        return {
            'chunk_size': self.chunk_size,
            'points_observed': self.points_observed,
            'chunks': [c.to_dict() for c in self.chunks],
            'checkpoints': self.timeline(),
            'skipped_points': self.skipped_points,
            'unreached_checkpoints': self.unreached_checkpoints,
            'created_at': self.created_at,
        }

    def to_json(self) -> str:
        """Serialize state to JSON"""
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def summary(self) -> str:
        """Get a summary of the state"""
        final = f"{self.final_map:.4f}" if self.final_map is not None else "n/a"
        return f"""
Stream Summary:
- Points observed: {self.points_observed} ({len(self.skipped_points)} skipped)
- Chunks: {len(self.chunks)}
- Checkpoints: {len(self.checkpoints)}
- Final mAP: {final}
- Learner time: {self.cum_learn_ms:.2f} ms
- Started: {self.created_at}
        """
