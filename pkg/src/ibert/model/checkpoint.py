"""Binary checkpoint container.

Byte layout (all integers little-endian):

    offset 0   magic  b"IBCK"            4 bytes
    +4         format version            u32  (currently 1)
    +8         config JSON length N      u32
    +12        config JSON (UTF-8, sorted keys, no whitespace)   N bytes
    ...        tensor count              u32
    per tensor:
        name length                      u16
        name (UTF-8)                     variable
        ndim                             u8
        dims                             ndim x u32
        payload                          prod(dims) x float32 little-endian

Tensors are written in parameter order; values are stored as float32, so a
save -> load -> save round trip is byte-identical.
"""

import json
import struct

import numpy as np

from ibert.errors import CheckpointError
from ibert.model.config import ModelConfig
from ibert.numerics.tensor import Tensor

MAGIC = b"IBCK"
VERSION = 1


def save_checkpoint(path, config: ModelConfig, params):
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    cfg = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<I", len(cfg))
    blob += cfg
    blob += struct.pack("<I", len(params))
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        data = np.ascontiguousarray(tensor.data, dtype=np.float32)
        blob += struct.pack("<B", data.ndim)
        for dim in data.shape:
            blob += struct.pack("<I", dim)
        blob += data.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelConfig, {name: Tensor float32})."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if len(blob) < 12 or bytes(view[:4]) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", view, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", view, 8)
    offset = 12
    try:
        config = ModelConfig.from_dict(json.loads(bytes(view[offset : offset + cfg_len])))
        offset += cfg_len
        (count,) = struct.unpack_from("<I", view, offset)
        offset += 4
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", view, offset)
            offset += 2
            name = bytes(view[offset : offset + name_len]).decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", view, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}I", view, offset)
            offset += 4 * ndim
            n = int(np.prod(dims)) if ndim else 1
            arr = np.frombuffer(view, dtype="<f4", count=n, offset=offset).reshape(dims)
            offset += 4 * n
            params[name] = Tensor(arr.astype(np.float32), requires_grad=True)
    except (struct.error, ValueError, KeyError) as exc:
        raise CheckpointError(f"{path}: truncated or corrupt checkpoint ({exc})") from exc
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return config, params
