"""Checkpoint files: a magic line, one JSON header line, then raw little-endian arrays.

``.ckpt`` files hold the fp32 export of an agent's weights; ``.state``
files hold the exact fp64 weights plus optimiser moments for resuming.
Headers are written with sorted keys and no timestamps, so equal
parameters give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .policy import AgentParams, AgentSpec

MAGIC = b"WECMARL-CKPT 1\n"


class CheckpointError(ValueError):
    pass


def _encode(header: dict, arrays: dict) -> bytes:
    meta = dict(header)
    meta["arrays"] = [{"name": k, "dtype": a.dtype.str, "shape": list(a.shape)} for k, a in arrays.items()]
    blob = b"".join(np.ascontiguousarray(a).tobytes() for a in arrays.values())
    return MAGIC + json.dumps(meta, sort_keys=True, separators=(",", ":")).encode() + b"\n" + blob


def _write(path, header: dict, arrays: dict) -> str:
    data = _encode(header, arrays)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return hashlib.sha256(data).hexdigest()


def _read(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    data = path.read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    try:
        end = data.index(b"\n", len(MAGIC))
        header = json.loads(data[len(MAGIC):end])
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    arrays, off = {}, end + 1
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        n = int(np.prod(spec["shape"])) if spec["shape"] else 1
        if off + n * dt.itemsize > len(data):
            raise CheckpointError(f"{path}: truncated array {spec['name']!r}")
        arrays[spec["name"]] = np.frombuffer(data, dtype=dt, count=n, offset=off).reshape(spec["shape"]).copy()
        off += n * dt.itemsize
    if off != len(data):
        raise CheckpointError(f"{path}: trailing or missing bytes")
    return header, arrays


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _agent_record(params: AgentParams, name: str, config_hash: str, rng_state) -> tuple[dict, dict]:
    header = {"kind": "agent", "agent": name, "spec": params.spec.to_dict(), "version": int(params.version),
              "config_hash": config_hash, "rng_state": rng_state, "params_sha256": params.digest(),
              "policy_sizes": list(params.spec.policy_sizes), "value_sizes": list(params.spec.value_sizes)}
    return header, {"weights": params.flat.astype("<f4")}


def checkpoint_bytes(params: AgentParams, name: str, config_hash: str = "", rng_state=None) -> bytes:
    """Exact bytes ``save_checkpoint`` would write."""
    return _encode(*_agent_record(params, name, config_hash, rng_state))


def checkpoint_hash(params: AgentParams, name: str, config_hash: str = "", rng_state=None) -> str:
    return hashlib.sha256(checkpoint_bytes(params, name, config_hash, rng_state)).hexdigest()


def save_checkpoint(path, params: AgentParams, name: str, config_hash: str = "", rng_state=None) -> str:
    """Write the fp32 export; returns the sha256 of the file."""
    return _write(path, *_agent_record(params, name, config_hash, rng_state))


def _spec(d: dict) -> AgentSpec:
    return AgentSpec(int(d["d_in"]), int(d["d_out"]), float(d["f_max"]), tuple(d["hidden"]), float(d["init_log_std"]))


def load_checkpoint(path) -> tuple[AgentParams, dict]:
    """fp32 weights widened to fp64, plus the header."""
    header, arrays = _read(path)
    if header.get("kind") != "agent":
        raise CheckpointError(f"{path}: not an agent checkpoint")
    spec = _spec(header["spec"])
    return AgentParams(spec, arrays["weights"].astype(float), int(header["version"])), header


def save_state(path, params: AgentParams, name: str, optimizer: dict | None = None) -> str:
    """Exact fp64 weights and optimiser moments for resuming training."""
    header = {"kind": "state", "agent": name, "spec": params.spec.to_dict(), "version": int(params.version),
              "adam_t": int(optimizer["t"]) if optimizer else 0}
    arrays = {"weights": params.flat.astype("<f8")}
    if optimizer:
        arrays["adam_m"] = optimizer["m"].astype("<f8")
        arrays["adam_v"] = optimizer["v"].astype("<f8")
    return _write(path, header, arrays)


def load_state(path) -> tuple[AgentParams, dict | None]:
    header, arrays = _read(path)
    if header.get("kind") != "state":
        raise CheckpointError(f"{path}: not a training state file")
    params = AgentParams(_spec(header["spec"]), arrays["weights"], int(header["version"]))
    opt = None
    if "adam_m" in arrays:
        opt = {"m": arrays["adam_m"], "v": arrays["adam_v"], "t": header["adam_t"]}
    return params, opt
