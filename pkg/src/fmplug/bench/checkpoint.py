"""Binary checkpoint format for trained flow models.

Layout (little-endian)::

    b"FMPL" | uint32 version | uint32 header_len | header (UTF-8 JSON) | float64 payload

The header records the architecture, path schedule, data dimension, parameter
count and training metadata; the payload holds every parameter tensor,
flattened row-major, in declaration order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..flow import FlowModel, VelocityField

MAGIC = b"FMPL"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _header(model: FlowModel) -> dict:
    net = model.field
    if not isinstance(net, VelocityField):
        raise TypeError("only models backed by a VelocityField can be checkpointed")
    if model.path.name != "linear":
        raise TypeError(f"unsupported path schedule {model.path.name!r}")
    return {
        "widths": net.widths,
        "time_features": net.time_features,
        "output": net.output,
        "floor": net.floor,
        "path": model.path.name,
        "d": model.d,
        "param_count": net.n_params,
        "metadata": model.metadata,
    }


def dumps(model: FlowModel) -> bytes:
    header = json.dumps(_header(model), sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.field.params)
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + payload


def loads(raw: bytes) -> FlowModel:
    if raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic bytes)")
    if len(raw) < 12:
        raise CheckpointError("corrupt checkpoint: truncated preamble")
    version, hlen = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})")
    if len(raw) < 12 + hlen:
        raise CheckpointError("corrupt checkpoint: truncated header")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: unreadable header ({exc})") from None
    try:
        net = VelocityField(header["widths"], header["time_features"], output=header["output"], floor=header["floor"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: bad architecture header ({exc})") from None
    if header["param_count"] != net.n_params:
        raise CheckpointError(
            f"corrupt checkpoint: header declares {header['param_count']} parameters, architecture has {net.n_params}"
        )
    payload = raw[12 + hlen :]
    if len(payload) != 8 * net.n_params:
        raise CheckpointError(
            f"corrupt checkpoint: payload holds {len(payload)} bytes, expected {8 * net.n_params}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    params, off = [], 0
    for shape in net.param_shapes():
        n = int(np.prod(shape))
        params.append(flat[off : off + n].astype(np.float64).reshape(shape))
        off += n
    net.params = params
    if header["path"] != "linear":
        raise CheckpointError(f"unsupported path schedule {header['path']!r}")
    return FlowModel(field=net, d=header["d"], metadata=header["metadata"])


def save_checkpoint(model: FlowModel, path) -> None:
    Path(path).write_bytes(dumps(model))


def load_checkpoint(path) -> FlowModel:
    return loads(Path(path).read_bytes())
