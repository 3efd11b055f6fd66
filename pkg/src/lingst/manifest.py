"""Run manifests: reproducibility metadata embedded in every output file."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

TOOL_VERSION = "0.1.0"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    inputs: dict = field(default_factory=dict)  # path -> sha256
    seeds: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: str = TOOL_VERSION

    def add_input(self, path) -> None:
        self.inputs[str(path)] = file_sha256(path)

    def to_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "config": self.config,
            "version": self.version,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path) -> None:
        d = self.to_dict()
        d["manifest_hash"] = self.hash
        with open(path, "w") as f:
            json.dump(d, f, indent=1, sort_keys=True)


def write_csv(path, header: list, rows, manifest: RunManifest | None = None) -> None:
    """CSV with a manifest-hash comment line; deterministic bytes."""
    import csv

    with open(path, "w", newline="") as f:
        if manifest is not None:
            f.write(f"# manifest {manifest.hash}\n")
        wr = csv.writer(f)
        wr.writerow(header)
        for row in rows:
            wr.writerow(list(row))


def write_json(path, payload: dict, manifest: RunManifest | None = None) -> None:
    if manifest is not None:
        payload = {"manifest_hash": manifest.hash, **payload}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
