"""Binary checkpoint format.

Layout: 4-byte magic, u16 format version, u32 JSON header length, JSON header
(architecture description plus tensor names/shapes), then the tensors as
little-endian float32 in header order.  Round-trips are bit-exact for
float32 networks.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import (
    ArchitectureMismatchError,
    CheckpointFormatError,
    CheckpointVersionError,
)
from .network import DuelingQNetwork

MAGIC = b"XRQN"
VERSION = 1


def save_checkpoint(network: DuelingQNetwork, path: str) -> None:
    params = network.parameters()
    header = {
        "arch": network.arch,
        "tensors": [[name, list(t.shape)] for name, t in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for tensor in params.values():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointFormatError(f"{path}: bad magic {magic!r}")
        head = fh.read(6)
        if len(head) != 6:
            raise CheckpointFormatError(f"{path}: truncated header")
        version, hlen = struct.unpack("<HI", head)
        if version != VERSION:
            raise CheckpointVersionError(f"{path}: unsupported version {version}")
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointFormatError(f"{path}: corrupt header: {exc}") from None
        params = {}
        for name, shape in header["tensors"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointFormatError(f"{path}: truncated tensor {name}")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return header["arch"], params


def load_into(network: DuelingQNetwork, path: str) -> None:
    arch, params = load_checkpoint(path)
    if arch != network.arch:
        raise ArchitectureMismatchError(
            f"{path}: checkpoint architecture {arch} does not match network "
            f"{network.arch}"
        )
    network.load_parameters(params)


def load_network(path: str, dtype=np.float32) -> DuelingQNetwork:
    arch, params = load_checkpoint(path)
    network = DuelingQNetwork(arch, np.random.default_rng(0), dtype)
    try:
        network.load_parameters(params)
    except Exception as exc:
        raise ArchitectureMismatchError(f"{path}: {exc}") from None
    return network
