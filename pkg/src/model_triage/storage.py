"""
Run output directory: artifacts, deterministic JSON documents and an advisory lock.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

from .errors import ConfigError

logger = logging.getLogger(__name__)

LOCK_NAME = ".lock"
INDEX_NAME = "manifest.json"


def dumps_document(data: Any) -> str:
    """Canonical JSON text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, default=str) + "\n"


class RunStorage:
    """
    Owns one output directory for the duration of a command.

    Use as a context manager: entering takes the advisory lock (a second
    holder gets ConfigError), leaving writes the artifact index and releases it.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._artifacts: dict[str, str] = {}
        self._locked = False

    @property
    def lock_path(self) -> Path:
        return self.root / LOCK_NAME

    def __enter__(self) -> "RunStorage":
        self.root.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError as exc:
            raise ConfigError(
                f"{self.root} is in use by another run (remove {LOCK_NAME} if stale)",
                field="output_dir",
            ) from exc
        with os.fdopen(fd, "w") as f:
            f.write(f"{os.getpid()}\n")
        self._locked = True
        self._load()
        return self

    def __exit__(self, *exc_info) -> None:
        if self._locked:
            self._save()
            self.lock_path.unlink(missing_ok=True)
            self._locked = False

    def _load(self) -> None:
        index = self.root / INDEX_NAME
        if index.exists():
            try:
                with open(index, "r", encoding="utf-8") as f:
                    self._artifacts = dict(json.load(f))
            except (json.JSONDecodeError, TypeError, ValueError):
                self._artifacts = {}

    def _save(self) -> None:
        (self.root / INDEX_NAME).write_text(dumps_document(self._artifacts), encoding="utf-8")

    def path(self, name: str) -> Path:
        return self.root / name

    def record(self, role: str, name: str) -> Path:
        """Register ``name`` as the artifact for ``role`` and return its path."""
        self._artifacts[role] = name
        logger.debug("artifact %s -> %s", role, self.root / name)
        return self.root / name

    def write_bytes(self, role: str, name: str, payload: bytes) -> Path:
        path = self.record(role, name)
        path.write_bytes(payload)
        return path

    def write_text(self, role: str, name: str, text: str) -> Path:
        path = self.record(role, name)
        path.write_text(text, encoding="utf-8")
        return path

    def write_json(self, role: str, name: str, data: Any) -> Path:
        return self.write_text(role, name, dumps_document(data))

    def artifacts(self) -> dict[str, str]:
        return dict(self._artifacts)

    def get(self, role: str) -> Path | None:
        name = self._artifacts.get(role)
        return self.root / name if name else None
