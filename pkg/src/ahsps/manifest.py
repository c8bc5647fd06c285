"""Run manifests: enough to re-execute a command and check its outputs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path(output: str | Path) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


@dataclass
class RunManifest:
    command: list[str]
    config: dict = field(default_factory=dict)
    seed: int | None = None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    started: str = ""
    finished: str = ""

    @staticmethod
    def now() -> str:
        return datetime.now(timezone.utc).isoformat(timespec="seconds")

    def add_input(self, path: str | Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path: str | Path) -> Path:
        self.finished = self.finished or self.now()
        path = Path(path)
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def verify(self, base: str | Path | None = None) -> list[str]:
        """Problems found re-hashing the listed files (empty when all match).

        Relative paths resolve against ``base`` when given.
        """
        problems = []
        for kind, files in (("input", self.inputs), ("output", self.outputs)):
            for name, digest in files.items():
                p = Path(name)
                if base is not None and not p.is_absolute():
                    p = Path(base) / p
                if not p.exists():
                    problems.append(f"{kind} {name}: missing")
                elif sha256_file(p) != digest:
                    problems.append(f"{kind} {name}: hash mismatch")
        return problems
