"""On-disk workspace: artifact subtrees plus a digest manifest.

Every artifact write updates ``manifest.json`` with the file's sha256, so any
later on-disk edit is detectable and two runs can be compared digest-for-digest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

ARTIFACT_DIRS = ("logs", "views", "prompts", "explanations", "graphs")

# canonical artifact paths
RAW_LOG = "logs/raw.csv"
NORMALIZED_LOG = "logs/normalized.csv"
ENRICHED_LOG = "logs/enriched.csv"
PROCESS_VIEW = "views/process_view.txt"
CAUSAL_VIEW = "views/causal_view.json"
XAI_VIEW = "views/xai_view.json"
TIMING_MATRIX = "views/timing_matrix.csv"
FEATURE_TABLE = "views/feature_table.csv"
PROMPT = "prompts/prompt.txt"
PROMPT_BUNDLE = "prompts/bundle.json"
ANSWER = "explanations/answer.json"
GRAPH = "graphs/kg.ndjson"
GRAPH_META = "graphs/kg.meta.json"

VIEW_ARTIFACTS = {"process": PROCESS_VIEW, "causal": CAUSAL_VIEW, "xai": XAI_VIEW}


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    def init(self) -> "Workspace":
        for sub in ARTIFACT_DIRS:
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        if not self.manifest_path.exists():
            self._save_manifest({})
        return self

    def path(self, relpath: str) -> Path:
        return self.root / relpath

    def exists(self, relpath: str) -> bool:
        return self.path(relpath).exists()

    def write(self, relpath: str, content: str | bytes) -> Path:
        data = content.encode("utf-8") if isinstance(content, str) else content
        target = self.path(relpath)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        manifest = self.manifest()
        manifest[relpath] = hashlib.sha256(data).hexdigest()
        self._save_manifest(manifest)
        return target

    def read_text(self, relpath: str) -> str:
        return self.path(relpath).read_text(encoding="utf-8")

    def read_bytes(self, relpath: str) -> bytes:
        return self.path(relpath).read_bytes()

    def manifest(self) -> dict[str, str]:
        if not self.manifest_path.exists():
            return {}
        return json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def _save_manifest(self, manifest: dict[str, str]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(
            json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8"
        )

    def verify_manifest(self) -> list[str]:
        """Relative paths whose content no longer matches the recorded digest."""
        mismatches = []
        for relpath, digest in self.manifest().items():
            target = self.path(relpath)
            if not target.exists():
                mismatches.append(relpath)
                continue
            actual = hashlib.sha256(target.read_bytes()).hexdigest()
            if actual != digest:
                mismatches.append(relpath)
        return mismatches

    def drop(self, *relpaths: str) -> None:
        manifest = self.manifest()
        for relpath in relpaths:
            manifest.pop(relpath, None)
            target = self.path(relpath)
            if target.exists():
                target.unlink()
        self._save_manifest(manifest)
