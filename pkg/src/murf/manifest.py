"""Run manifests: what command ran, with what inputs and seed."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    args: dict
    seed: int | None = None
    version: str = ""
    inputs: dict = field(default_factory=dict)
    created: str = ""

    @classmethod
    def create(cls, command: str, args: dict, seed: int | None = None,
               inputs: dict[str, str | Path] | None = None) -> "RunManifest":
        from . import __version__

        digests = {}
        for name, p in (inputs or {}).items():
            p = Path(p)
            digests[name] = {"path": str(p), "sha256": _file_digest(p)}
        return cls(
            command=command,
            args={k: _jsonable(v) for k, v in args.items()},
            seed=seed,
            version=__version__,
            inputs=digests,
            created=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]

    def write(self, path: str | Path) -> str:
        """Write the manifest JSON; returns its short digest."""
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return self.digest()


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if hasattr(v, "item"):
        return v.item()
    return v
