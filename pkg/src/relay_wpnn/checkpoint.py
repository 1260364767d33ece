"""Single-file checkpoints.

Layout (all integers little-endian)::

    8 bytes   magic  b"WPNNCKPT"
    uint32    format version (1)
    uint32    header length N
    N bytes   UTF-8 JSON header: {"config": {flat config}, "rng": id, "seed": int,
              "fields": [{"name", "shape", "complex", "count"}, ...]}
    payload   every field in header order as little-endian float64;
              complex arrays are stored as interleaved (re, im) pairs, C order

The fields are the ``ModelParams`` arrays, optionally followed by ``channel.g_t`` and
``channel.g_r`` when the model was trained under one held channel realization.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from relay_wpnn import model as mdl
from relay_wpnn.channels import ChannelDraw
from relay_wpnn.config import build_configs, flatten
from relay_wpnn.linalg import RNG_ALGORITHM, pseudoinverse

MAGIC = b"WPNNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: mdl.ModelParams
    config: object
    train: object
    channels: ChannelDraw | None
    header: dict


def dumps(params, config, train=None, seed=None, channels=None, extra=None):
    arrays = params.items()
    if channels is not None:
        arrays += [("channel.g_t", channels.g_t), ("channel.g_r", channels.g_r)]
    fields, chunks = [], []
    for name, value in arrays:
        real = np.ascontiguousarray(value).view(np.float64) if np.iscomplexobj(value) else value
        flat = np.ascontiguousarray(real, dtype="<f8").ravel()
        fields.append({"name": name, "shape": list(value.shape), "complex": bool(np.iscomplexobj(value)),
                       "count": int(flat.size)})
        chunks.append(flat.tobytes())
    header = {"config": flatten(config, train), "rng": RNG_ALGORITHM, "seed": seed, "fields": fields}
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + b"".join(chunks)


def loads(data):
    """Parse bytes produced by :func:`dumps` into a :class:`Checkpoint`."""
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if len(data) < 16:
        raise CheckpointError("truncated checkpoint header")
    version, n = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(data[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header: {exc}") from None
    exp, train = build_configs(header["config"])
    offset = 16 + n
    arrays = {}
    for f in header["fields"]:
        end = offset + 8 * f["count"]
        if end > len(data):
            raise CheckpointError(f"truncated payload in field {f['name']}")
        flat = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64)
        arr = flat.view(np.complex128) if f["complex"] else flat
        arrays[f["name"]] = arr.reshape(f["shape"]).copy()
        offset = end
    if offset != len(data):
        raise CheckpointError("trailing bytes after payload")
    missing = set(mdl.ModelParams.names()) - set(arrays)
    if missing:
        raise CheckpointError("checkpoint lacks fields: " + ", ".join(sorted(missing)))
    params = mdl.ModelParams(**{name: arrays[name] for name in mdl.ModelParams.names()})
    mdl.check_params(params, exp)
    channels = None
    if "channel.g_t" in arrays:
        g_t, g_r = arrays["channel.g_t"], arrays["channel.g_r"]
        pinv = pseudoinverse(g_t, exp.ridge) if exp.scheme.channel_processing else None
        channels = ChannelDraw(g_t, g_r, pinv, 0)
    return Checkpoint(params, exp, train, channels, header)


def save(path, params, config, train=None, seed=None, channels=None, extra=None):
    with open(path, "wb") as fh:
        fh.write(dumps(params, config, train, seed, channels, extra))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
