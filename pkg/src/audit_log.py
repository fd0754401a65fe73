"""
Audit Log - Run event logging
Records chunks, checkpoints, artifacts and errors as JSON lines
"""

import json
import sys
from pathlib import Path
from typing import Optional, Dict, Any, List
from datetime import datetime


class AuditLog:
    """
    JSONL event log for a streaming run

    Records:
    - Per-chunk learner cost and update statistics
    - Checkpoint evaluations
    - Artifacts written (path and checksum)
    - Errors and skipped points
    """

    def __init__(self, log_file: Optional[str] = None):
        self.log_file = Path(log_file) if log_file else Path('./data/runlog.jsonl')
        self.log_file.parent.mkdir(parents=True, exist_ok=True)
        self.entries: List[Dict[str, Any]] = []

    def _record(self, entry: Dict[str, Any]) -> None:
        entry = {'timestamp': datetime.now().isoformat(), **entry}
        self.entries.append(entry)
        self._append_to_file(entry)

    def _append_to_file(self, entry: Dict[str, Any]) -> None:
        """Append a single entry to the JSONL log file"""
        try:
            with open(self.log_file, 'a', encoding='utf-8') as f:
                f.write(json.dumps(entry, ensure_ascii=False) + '\n')
        except Exception as e:
            print(f"Warning: Failed to append to audit log: {e}", file=sys.stderr)

    def log_chunk(
        self,
        chunk_index: int,
        points: int,
        learn_ms: float,
        aggressive_rows: int = 0,
        skipped: int = 0,
        io_ms: float = 0.0
    ) -> None:
        """
        Log one processed chunk

        Args:
            chunk_index: Position of the chunk in the stream
            points: Number of points in the chunk
            learn_ms: Wall time spent in learner updates
            aggressive_rows: Rows of U and V that took a non-zero step
            skipped: Points that could not drive an update
            io_ms: Simulated transfer cost of the chunk
        """
        self._record({
            'event_type': 'chunk',
            'chunk_index': chunk_index,
            'points': points,
            'learn_ms': learn_ms,
            'aggressive_rows': aggressive_rows,
            'skipped': skipped,
            'io_ms': io_ms,
        })

    def log_checkpoint(self, checkpoint: int, map_value: Optional[float], cum_learn_ms: float) -> None:
        """Log a checkpoint evaluation"""
        self._record({
            'event_type': 'checkpoint',
            'checkpoint': checkpoint,
            'map': map_value,
            'cum_learn_ms': cum_learn_ms,
        })

    def log_artifact(self, path: str, kind: str, sha256: str) -> None:
        """Log an artifact written to disk"""
        self._record({
            'event_type': 'artifact',
            'path': str(path),
            'kind': kind,
            'sha256': sha256,
        })

    def log_error(
        self,
        error_type: str,
        error_message: str,
        context: Dict[str, Any] = None
    ) -> None:
        """Log an error event"""
        self._record({
            'event_type': 'error',
            'error_type': error_type,
            'error_message': error_message,
            'context': context or {},
        })

    def get_entries(self, event_type: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        Get log entries

        Args:
            event_type: Filter by event type (optional)

        Returns:
            List of log entries
        """
        if event_type is None:
            return self.entries

        return [e for e in self.entries if e.get('event_type') == event_type]

    def get_chunk_summary(self) -> Dict[str, Any]:
        """Aggregate chunk entries"""

        summary = {
            'chunks': 0,
            'points': 0,
            'skipped': 0,
            'total_learn_ms': 0.0,
            'total_io_ms': 0.0,
            'errors': len(self.get_entries('error')),
        }

        for entry in self.get_entries('chunk'):
            summary['chunks'] += 1
            summary['points'] += entry.get('points', 0)
            summary['skipped'] += entry.get('skipped', 0)
            summary['total_learn_ms'] += entry.get('learn_ms', 0.0)
            summary['total_io_ms'] += entry.get('io_ms', 0.0)

        return summary

    def load_from_file(self) -> None:
        """Load all entries from JSONL log file"""
        if not self.log_file.exists():
            return

        self.entries = []
        try:
            with open(self.log_file, 'r', encoding='utf-8') as f:
                for line in f:
                    if line.strip():
                        self.entries.append(json.loads(line))
        except Exception as e:
            print(f"Warning: Failed to load audit log: {e}", file=sys.stderr)

    def export_summary(self) -> str:
        """Export a human-readable summary"""

        summary = self.get_chunk_summary()
        lines = [
            "=== Run Log Summary ===",
            f"Chunks: {summary['chunks']}",
            f"Points: {summary['points']} ({summary['skipped']} skipped)",
            f"Learner time: {summary['total_learn_ms']:.2f} ms",
            f"Errors: {summary['errors']}",
        ]

        checkpoints = self.get_entries('checkpoint')
        if checkpoints:
            lines.append("")
            lines.append("Checkpoints:")
            for entry in checkpoints:
                value = entry.get('map')
                shown = f"{value:.4f}" if value is not None else "n/a"
                lines.append(f"  @{entry['checkpoint']}: mAP {shown}")

        return '\n'.join(lines)

    def clear(self) -> None:
        """Clear all log entries"""
        self.entries = []
        if self.log_file.exists():
            self.log_file.unlink()
