"""Binary checkpoint files: magic, version, JSON header, raw little-endian f32 payloads.

The header holds the architecture config, training provenance and a tensor
directory (name, shape, byte offset, byte length relative to the payload
start). Serialization is canonical, so save -> load -> save is byte-identical.
"""
import json
import logging
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from src.errors import CheckpointError
from src.models.config import CpgaConfig
from src.models.cpga import CpgaNet
from src.models.layers import load_weights, state_dict

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_U32 = struct.Struct("<I")


class StageRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    stage: str
    epochs: int = 0
    steps: int = 0
    lr: float = 0.0
    final_loss: Optional[float] = None
    best_psnr: Optional[float] = None


class Provenance(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    stages: list[StageRecord] = Field(default_factory=list)

    def with_stage(self, record: StageRecord) -> "Provenance":
        return Provenance(seed=self.seed, stages=[*self.stages, record])


@dataclass
class Checkpoint:
    config: CpgaConfig
    weights: dict[str, np.ndarray]
    provenance: Provenance

    @classmethod
    def from_net(cls, net: CpgaNet, provenance: Optional[Provenance] = None) -> "Checkpoint":
        return cls(net.config, state_dict(net), provenance or Provenance())

    def build(self, seed: int = 0) -> CpgaNet:
        """Fresh network of the stored config carrying the stored weights."""
        net = CpgaNet(self.config, seed=seed)
        load_into(net, self)
        return net


def load_into(net: CpgaNet, ckpt: Checkpoint) -> None:
    """Copy checkpoint weights into ``net``; a differing architecture is rejected."""
    if net.config != ckpt.config:
        raise CheckpointError(
            f"checkpoint config does not match the network: "
            f"{ckpt.config.model_dump()} vs {net.config.model_dump()}"
        )
    try:
        load_weights(net, ckpt.weights, strict=True)
    except (KeyError, ValueError) as e:
        raise CheckpointError(str(e)) from e


def encode(ckpt: Checkpoint) -> bytes:
    directory = []
    payloads = []
    offset = 0
    for name, arr in ckpt.weights.items():
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        payloads.append(blob)
        offset += len(blob)

    header = {
        "config": ckpt.config.model_dump(mode="json"),
        "provenance": ckpt.provenance.model_dump(mode="json"),
        "tensors": directory,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), _U32.pack(len(header_bytes)), header_bytes, *payloads])


def decode(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    prefix = len(CHECKPOINT_MAGIC)
    if blob[:prefix] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic {blob[:prefix]!r})")
    if len(blob) < prefix + 8:
        raise CheckpointError(f"{source}: truncated header")
    (version,) = _U32.unpack_from(blob, prefix)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{source}: unsupported format version {version} (expected {CHECKPOINT_VERSION})")
    (header_len,) = _U32.unpack_from(blob, prefix + 4)
    start = prefix + 8
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
        config = CpgaConfig.model_validate(header["config"])
        provenance = Provenance.model_validate(header["provenance"])
        directory = header["tensors"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValidationError) as e:
        raise CheckpointError(f"{source}: corrupt header ({e})") from e

    payload = memoryview(blob)[start + header_len:]
    weights: dict[str, np.ndarray] = {}
    for entry in directory:
        name, shape = entry["name"], tuple(entry["shape"])
        lo, hi = entry["offset"], entry["offset"] + entry["nbytes"]
        if name in weights:
            raise CheckpointError(f"{source}: tensor '{name}' stored twice")
        if hi > len(payload) or entry["nbytes"] != 4 * int(np.prod(shape)):
            raise CheckpointError(f"{source}: tensor '{name}' payload is truncated or mis-sized")
        weights[name] = np.frombuffer(payload[lo:hi], dtype="<f4").reshape(shape).astype(np.float32)
    return Checkpoint(config, weights, provenance)


def save_checkpoint(ckpt: Checkpoint, path: PathLike) -> Path:
    """Write atomically (temp file + rename) so an interrupted save keeps the old file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(ckpt))
    os.replace(tmp, path)
    logger.debug(f"Saved checkpoint {path} ({len(ckpt.weights)} tensors)")
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return decode(blob, str(path))


def load_net(path: PathLike) -> tuple[CpgaNet, Checkpoint]:
    ckpt = load_checkpoint(path)
    return ckpt.build(), ckpt
