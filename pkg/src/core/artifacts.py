"""
Artifacts System - run outputs and their manifest

Every command writes its files into one output directory and records them
in ``manifest.json`` together with the run configuration, so a run can be
audited or repeated from the directory alone.
"""

import csv
import hashlib
import io
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from config.settings import Settings

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class RunArtifacts:
    """Writes the files of one command run and keeps the manifest current."""

    # Known artifact kinds
    ARTIFACT_TYPES = {
        "points": "Per-point scatter (index, basis, Y_A, Y_B, class, rates)",
        "boundary": "Post-selection boundary curve",
        "stage_report": "Stage table (CSV)",
        "stage_table": "Stage table (text)",
        "alice_key": "Alice's final key (hex)",
        "bob_key": "Bob's final key (hex)",
        "transcript": "Raw classical-channel frames",
        "summary": "Machine-readable run summary",
    }

    def __init__(self, command: str, out_dir: Optional[Path] = None, config: Optional[dict] = None):
        """
        Args:
            command: Subcommand that produced the run.
            out_dir: Target directory (defaults to Settings.OUTPUT_DIR).
            config: Run configuration recorded in the manifest.
        """
        self.command = command
        self.out_dir = Settings.ensure_dirs(out_dir)
        self.config = config or {}
        self.manifest_path = self.out_dir / "manifest.json"
        self.artifacts: Dict[str, dict] = {}

    def _register(self, artifact_type: str, path: Path) -> Path:
        if artifact_type not in self.ARTIFACT_TYPES:
            raise ValueError(f"Unknown artifact type: {artifact_type}")
        data = path.read_bytes()
        self.artifacts[artifact_type] = {
            "path": path.name,
            "description": self.ARTIFACT_TYPES[artifact_type],
            "size": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
        }
        self._update_manifest()
        logger.info(f"Wrote {artifact_type}: {path}")
        return path

    def write_csv(self, artifact_type: str, filename: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        """CSV with a fixed header row, '.' decimals and LF line endings."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        path = self.out_dir / filename
        path.write_bytes(buf.getvalue().encode("utf-8"))
        return self._register(artifact_type, path)

    def write_text(self, artifact_type: str, filename: str, text: str) -> Path:
        path = self.out_dir / filename
        path.write_bytes(text.encode("utf-8"))
        return self._register(artifact_type, path)

    def write_bytes(self, artifact_type: str, filename: str, data: bytes) -> Path:
        path = self.out_dir / filename
        path.write_bytes(data)
        return self._register(artifact_type, path)

    def write_json(self, artifact_type: str, filename: str, data: dict) -> Path:
        return self.write_text(artifact_type, filename, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def get_artifact(self, artifact_type: str) -> Optional[Path]:
        entry = self.artifacts.get(artifact_type)
        if entry:
            path = self.out_dir / entry["path"]
            if path.exists():
                return path
        return None

    def list_artifacts(self) -> List[dict]:
        return [{"type": t, **entry} for t, entry in self.artifacts.items()]

    def _update_manifest(self):
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "updated": datetime.now().isoformat(),
            "artifacts": self.artifacts,
        }
        with open(self.manifest_path, "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, ensure_ascii=False)

    @staticmethod
    def load_manifest(out_dir: Path) -> dict:
        path = Path(out_dir) / "manifest.json"
        if not path.exists():
            raise FileNotFoundError(f"No manifest in {out_dir}")
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
