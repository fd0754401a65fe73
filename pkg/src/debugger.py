"""
Debugger - Debug output management
Controls debug logging across hashing, learning, search and the stream loop
"""

from typing import Dict, Any, Optional
import json
import sys
from pathlib import Path
from datetime import datetime


class Debugger:
    """
    Debug logging system for engine execution

    Levels:
    - 'none': No debug output
    - 'basic': Key steps (training, chunks, checkpoints)
    - 'verbose': Per-iteration and per-query details

    Console output goes to stderr so that TSV/JSON written to stdout stays clean.
    File logging always captures full details regardless of console setting.
    """

    def __init__(self, enabled: bool = False, level: str = 'basic', log_file: Optional[str] = None):
        """
        Initialize debugger

        Args:
            enabled: Whether debug output is enabled on console
            level: Debug level ('none', 'basic', 'verbose')
            log_file: Optional file path for complete logging (always full details)
        """
        self.enabled = enabled
        self.level = level
        self.log_file = log_file

        if self.log_file:
            log_path = Path(self.log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            with open(log_path, 'w') as f:
                f.write("=== OHSL Debug Log ===\n")
                f.write(f"Started: {datetime.now().isoformat()}\n")
                f.write("=" * 50 + "\n\n")

    @property
    def verbose(self) -> bool:
        return self.enabled and self.level == 'verbose'

    def _format_output(self, section: str, message: str) -> str:
        """Format debug output"""
        return f"[DEBUG {section}] {message}"

    def _log_to_file(self, section: str, message: str, full_detail: str = "") -> None:
        """Log message to file with full details"""
        if not self.log_file:
            return

        try:
            with open(self.log_file, 'a', encoding='utf-8') as f:
                timestamp = datetime.now().isoformat()
                f.write(f"[{timestamp}] [{section}] {message}\n")
                if full_detail:
                    f.write("  FULL_DETAIL:\n")
                    f.write(f"    {full_detail}\n")
                f.write("\n")
                f.flush()
        except Exception as e:
            print(f"Warning: Failed to write to log file: {e}", file=sys.stderr)

    def print(self, section: str, message: str) -> None:
        """Print debug message if enabled; always log to file"""
        if self.enabled and self.level != 'none':
            print(self._format_output(section, message), file=sys.stderr)

        self._log_to_file(section, message)

    def print_dict(self, section: str, label: str, data: Dict[str, Any]) -> None:
        """Print dictionary as JSON"""
        try:
            json_str = json.dumps(data, indent=2, ensure_ascii=False, default=str)

            if self.enabled and self.level != 'none':
                print(self._format_output(section, f"{label}:\n{json_str}"), file=sys.stderr)

            self._log_to_file(section, f"{label}:", json_str)
        except Exception as e:
            error_msg = f"{label}: (failed to serialize: {e})"
            if self.enabled:
                print(self._format_output(section, error_msg), file=sys.stderr)
            self._log_to_file(section, error_msg)

    # === Hashing ===

    def itq_iteration(self, iteration: int, error: float) -> None:
        """Log one ITQ rotation update"""
        if self.verbose:
            self.print("HASH", f"ITQ iteration {iteration}: quantization error {error:.6f}")

    def hash_trained(self, dim: int, bits: int, sample: int, final_error: Optional[float]) -> None:
        """Log hash model training completion"""
        err = f"{final_error:.6f}" if final_error is not None else "n/a"
        self.print("HASH", f"Trained {dim}->{bits} bit hash on {sample} points (error {err})")

    # === Stream ===

    def chunk_start(self, chunk_index: int, start: int, stop: int) -> None:
        """Log chunk arrival"""
        if self.verbose:
            self.print("STREAM", f"=== CHUNK {chunk_index} [{start}, {stop}) ===")

    def chunk_end(self, chunk_index: int, learn_ms: float, aggressive: int, skipped: int) -> None:
        """Log chunk completion"""
        self.print(
            "STREAM",
            f"Chunk {chunk_index} learned in {learn_ms:.2f} ms "
            f"({aggressive} aggressive rows, {skipped} skipped points)"
        )

    def checkpoint(self, points: int, map_value: Optional[float], cum_learn_ms: float) -> None:
        """Log checkpoint evaluation"""
        shown = f"{map_value:.4f}" if map_value is not None else "n/a"
        self.print("STREAM", f"Checkpoint @{points}: mAP {shown}, learner {cum_learn_ms:.1f} ms")

    # === Search ===

    def query_done(self, engine: str, query_index: int, results: int, probed: Optional[int] = None) -> None:
        """Log a finished query"""
        if not self.verbose:
            return

        extra = f", probed {probed}" if probed is not None else ""
        self.print("SEARCH", f"{engine} query {query_index}: {results} results{extra}")

    # === Summary ===

    def execution_complete(self, label: str, total_time: float) -> None:
        """Log execution completion"""
        self.print("EXECUTION", f"✓ {label} completed in {total_time:.2f}s")

    def execution_error(self, error: str) -> None:
        """Log execution error"""
        self.print("EXECUTION", f"✗ Error: {error}")


class DebugConfig:
    """Debug configuration from config.json"""

    @staticmethod
    def from_dict(config: Dict[str, Any]) -> Debugger:
        """Create Debugger from config dictionary"""

        debug_config = config.get('debug', {})
        enabled = debug_config.get('enabled', False)
        level = debug_config.get('level', 'basic')
        log_file = debug_config.get('log_file', None)

        return Debugger(enabled=enabled, level=level, log_file=log_file)
