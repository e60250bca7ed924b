"""Versioned binary checkpoints.

Layout: ``b"PMAD"`` | uint16 version | uint32 header length | JSON header |
little-endian float32 tensors in row-major order at the offsets the header lists.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Optional
import json
import struct
import numpy as np
import structlog
import torch
from .exceptions import CheckpointError
from .ingest import DomainIndex
from .models import PatchMemoryAutoencoder, build_model
from .schemas import ModelConfig, TrainConfig

logger = structlog.get_logger()

MAGIC = b"PMAD"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<4sHI")
_DTYPE = np.dtype("<f4")
HEADER_KEYS = ("config", "domains", "n_items", "init_domain", "tensors", "payload_bytes")


@dataclass
class Checkpoint:
    model: PatchMemoryAutoencoder
    domain_index: DomainIndex
    config: TrainConfig


def save_checkpoint(model: PatchMemoryAutoencoder, domain_index: DomainIndex,
                    config: TrainConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    tensors, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        if name == "memory.init_domain":
            continue
        data = tensor.detach().cpu().numpy().astype(_DTYPE, copy=False)
        tensors.append({"name": name, "shape": list(data.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(data).tobytes())
        offset += data.nbytes

    header = {
        "config": config.train_part().model_dump(mode="json"),
        "domains": [list(label) for label in domain_index.labels],
        "n_items": model.memory.n_items if model.memory is not None else 0,
        "init_domain": model.memory.init_domain.tolist() if model.memory is not None else [],
        "tensors": tensors,
        "payload_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
        fh.write(header_bytes)
        for chunk in chunks:
            fh.write(chunk)
    logger.info("Checkpoint saved", path=str(path), bytes=path.stat().st_size)
    return path


def load_checkpoint(path, expected: Optional[ModelConfig] = None) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}")

    if len(blob) < _PREFIX.size:
        raise CheckpointError(f"Truncated checkpoint header: {path}")
    magic, version, header_len = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"Bad magic {magic!r} in {path}")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {version} in {path}")
    body_start = _PREFIX.size + header_len
    if len(blob) < body_start:
        raise CheckpointError(f"Truncated checkpoint header: {path}")
    try:
        header = json.loads(blob[_PREFIX.size:body_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"Corrupt checkpoint header in {path}: {e}")
    if not isinstance(header, dict):
        raise CheckpointError(f"Corrupt checkpoint header in {path}: expected an object")
    absent = [key for key in HEADER_KEYS if key not in header]
    if absent:
        raise CheckpointError(f"Checkpoint header in {path} is missing keys: {', '.join(absent)}",
                              missing=absent)
    if len(blob) - body_start != header["payload_bytes"]:
        raise CheckpointError(
            f"Truncated checkpoint payload in {path}: "
            f"expected {header['payload_bytes']} bytes, found {len(blob) - body_start}"
        )

    config = TrainConfig(**header["config"])
    if expected is not None and config.model_part() != expected:
        raise CheckpointError(f"Checkpoint {path} does not match the configured model dimensions")

    domain_index = DomainIndex([tuple(label) for label in header["domains"]])
    model = build_model(config, n_items=max(header["n_items"], 1))
    state = model.state_dict()
    loaded = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in state:
            raise CheckpointError(f"Unexpected tensor {name} in {path}")
        if tuple(state[name].shape) != shape:
            raise CheckpointError(
                f"Shape mismatch for {name} in {path}: {shape} vs {tuple(state[name].shape)}"
            )
        count = int(np.prod(shape)) if shape else 1
        start = body_start + entry["offset"]
        data = np.frombuffer(blob, dtype=_DTYPE, count=count, offset=start).reshape(shape)
        loaded[name] = torch.from_numpy(data.astype(np.float32))
    if model.memory is not None:
        loaded["memory.init_domain"] = torch.tensor(header["init_domain"], dtype=torch.long)
    missing = sorted(set(state) - set(loaded))
    if missing:
        raise CheckpointError(f"Checkpoint {path} lacks tensors: {', '.join(missing)}")
    model.load_state_dict(loaded)
    model.eval()
    logger.info("Checkpoint loaded", path=str(path), n_domains=len(domain_index))
    return Checkpoint(model, domain_index, config)


def load_encoder_weights(model: PatchMemoryAutoencoder, path) -> None:
    """Copy embedding and encoder weights from another checkpoint."""
    source = load_checkpoint(path, expected=model.config).model
    model.embedding.load_state_dict(source.embedding.state_dict())
    model.encoder.load_state_dict(source.encoder.state_dict())
    logger.info("Encoder initialized from checkpoint", path=str(path))
