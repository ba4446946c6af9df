"""Report persistence: JSON for structured results, CSV for bulk arrays,
an optional binary dump for large sample sets, and the run manifest.

Floats are serialized with repr (shortest round-trip form, <= 17 significant
digits), so load(persist(x)) == x holds field for field.  The manifest is
written atomically last.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ARTIFACT_VERSION = "0.1.0"
BINARY_MAGIC = b"OC01"


class PersistError(RuntimeError):
    pass


class VersionMismatch(PersistError):
    pass


def _float_safe(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def save_json(payload: dict, path) -> Path:
    path = Path(path)
    doc = {"artifact_version": ARTIFACT_VERSION, "payload": payload}
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", dir=path.parent, delete=False,
                                     suffix=".tmp") as fh:
        json.dump(doc, fh, indent=1, default=_float_safe)
        tmp = fh.name
    os.replace(tmp, path)
    return path


def load_json(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise PersistError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PersistError(f"corrupted JSON at {path}: {exc}") from exc
    if not isinstance(doc, dict) or "artifact_version" not in doc:
        raise PersistError(f"not an artifact report: {path}")
    if doc["artifact_version"].split(".")[0] != ARTIFACT_VERSION.split(".")[0]:
        raise VersionMismatch(
            f"report version {doc['artifact_version']} needs migration to "
            f"{ARTIFACT_VERSION}")
    return doc["payload"]


def batch_to_csv(batch, path) -> Path:
    """SampleBatch rows: chain,sweep,index,value (one eigenvalue per row)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["chain,sweep,index,value"]
    chain = batch.chain_index if batch.chain_index is not None else np.zeros(
        batch.draws, dtype=int)
    sweep = batch.sweep_index if batch.sweep_index is not None else np.arange(batch.draws)
    for d in range(batch.draws):
        c, s = int(chain[d]), int(sweep[d])
        row = batch.configs[d]
        for i in range(batch.n):
            lines.append(f"{c},{s},{i},{float(row[i])!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def batch_from_csv(path):
    from .sampler import SampleBatch
    path = Path(path)
    rows = path.read_text().strip().split("\n")
    if rows[0] != "chain,sweep,index,value":
        raise PersistError(f"unexpected CSV header in {path}: {rows[0]}")
    chains, sweeps, vals = [], [], []
    current = None
    for line in rows[1:]:
        c, s, i, v = line.split(",")
        c, s, i = int(c), int(s), int(i)
        if i == 0:
            current = []
            chains.append(c)
            sweeps.append(s)
            vals.append(current)
        current.append(float(v))
    configs = np.array(vals)
    return SampleBatch(configs=configs, n=configs.shape[1], beta=0,
                       acceptance_rates=[], step_sizes=[], tau=float("nan"),
                       ess=float("nan"), seeds=[],
                       chain_index=np.array(chains), sweep_index=np.array(sweeps))


def batch_to_binary(batch, path) -> Path:
    """Header: magic 'OC01', uint64 rows, uint64 cols; then row-major
    little-endian float64 data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(np.array(batch.configs.shape, dtype="<u8").tobytes())
        fh.write(batch.configs.astype("<f8").tobytes())
    return path


def batch_binary_read(path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != BINARY_MAGIC:
        raise PersistError(f"bad magic in {path}")
    rows, cols = np.frombuffer(raw[4:20], dtype="<u8")
    data = np.frombuffer(raw[20:], dtype="<f8")
    if data.size != rows * cols:
        raise PersistError(f"truncated binary dump: {path}")
    return data.reshape(int(rows), int(cols))


def config_hash(resolved: dict) -> str:
    """Stable under key reordering: hash of the canonical sorted-key JSON."""
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"),
                       default=_float_safe)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    config_hash: str
    steps: list = field(default_factory=list)      # (name, status, seconds)
    outputs: list = field(default_factory=list)
    artifact_version: str = ARTIFACT_VERSION

    def record(self, name: str, status: str, seconds: float):
        self.steps.append({"step": name, "status": status, "seconds": seconds})

    def add_output(self, path):
        self.outputs.append(str(path))

    def write(self, path) -> Path:
        doc = {
            "artifact_version": self.artifact_version,
            "config_hash": self.config_hash,
            "steps": self.steps,
            "outputs": sorted(self.outputs),
            "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile("w", dir=path.parent, delete=False,
                                         suffix=".tmp") as fh:
            json.dump(doc, fh, indent=1)
            tmp = fh.name
        os.replace(tmp, path)
        return path


class StepTimer:
    def __init__(self, manifest: RunManifest, name: str):
        self.manifest = manifest
        self.name = name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "ok" if exc_type is None else f"failed: {exc_type.__name__}"
        self.manifest.record(self.name, status, time.perf_counter() - self.t0)
        return False
