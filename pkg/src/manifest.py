"""
Manifest - Run provenance
Records config, seeds, artifact checksums and build version next to every output
"""

import json
import subprocess
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.formats import FORMAT_VERSIONS, sha256_file


REPO_ROOT = Path(__file__).resolve().parent.parent


def git_describe() -> str:
    """`git describe --always --dirty` of the source tree, or "unknown" """
    try:
        result = subprocess.run(
            ['git', 'describe', '--always', '--dirty'],
            cwd=REPO_ROOT,
            capture_output=True,
            text=True,
            timeout=5
        )
    except (OSError, subprocess.SubprocessError):
        return 'unknown'

    described = result.stdout.strip()
    return described if result.returncode == 0 and described else 'unknown'


@dataclass
class ArtifactRef:
    """A file read or written by a run"""
    path: str
    kind: str
    sha256: str

    @classmethod
    def of(cls, path: str, kind: str) -> 'ArtifactRef':
        return cls(str(path), kind, sha256_file(path))


@dataclass
class RunManifest:
    """Provenance of one subcommand run"""
    command: str
    config: Dict[str, Any]
    seeds: Dict[str, int] = field(default_factory=dict)
    inputs: List[ArtifactRef] = field(default_factory=list)
    outputs: List[ArtifactRef] = field(default_factory=list)
    format_versions: Dict[str, int] = field(default_factory=lambda: dict(FORMAT_VERSIONS))
    build: str = field(default_factory=git_describe)
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())

    def add_input(self, path: str, kind: str) -> ArtifactRef:
        ref = ArtifactRef.of(path, kind)
        self.inputs.append(ref)
        return ref

    def add_output(self, path: str, kind: str) -> ArtifactRef:
        ref = ArtifactRef.of(path, kind)
        self.outputs.append(ref)
        return ref

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False, default=str)

    @staticmethod
    def path_for(artifact: str) -> str:
        return f"{artifact}.manifest.json"

    def write_all(self, audit_log=None) -> List[str]:
        """Write the manifest beside every output artifact"""
        written = []
        text = self.to_json()
        for ref in self.outputs:
            target = self.path_for(ref.path)
            Path(target).write_text(text + '\n', encoding='utf-8')
            written.append(target)
            if audit_log:
                audit_log.log_artifact(ref.path, ref.kind, ref.sha256)
        return written

    @classmethod
    def load(cls, path: str) -> 'RunManifest':
        data = json.loads(Path(path).read_text(encoding='utf-8'))
        data['inputs'] = [ArtifactRef(**r) for r in data.get('inputs', [])]
        data['outputs'] = [ArtifactRef(**r) for r in data.get('outputs', [])]
        return cls(**data)

    def verify(self) -> List[str]:
        """Paths whose current checksum differs from the recorded one"""
        changed = []
        for ref in self.inputs + self.outputs:
            if not Path(ref.path).exists() or sha256_file(ref.path) != ref.sha256:
                changed.append(ref.path)
        return changed
