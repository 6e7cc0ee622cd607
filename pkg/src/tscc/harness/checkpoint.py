"""Codec checkpoint files.

Layout (all integers little-endian):

    bytes 0..7      magic b"TSCCKPT\\0"
    bytes 8..11     uint32 header length L
    next L bytes    UTF-8 JSON header with keys
                      format_version, latent_dim, seed, beta_c_rec,
                      config (every CodecConfig field),
                      parameters: [{"name", "shape"}, ...] in declaration order,
                      agent: free-form description of the agent trained against
    then            each parameter as little-endian float64, row-major, in the
                    order listed in the header
    last 32 bytes   SHA-256 of everything before it
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from ..core import CodecConfig
from ..jscc import JsccCodec

MAGIC = b"TSCCKPT\0"
FORMAT_VERSION = 1
_DIGEST = 32


class CheckpointError(Exception):
    pass


def _header(codec: JsccCodec, agent_info: dict | None) -> dict:
    cfg = codec.config
    return {
        "format_version": FORMAT_VERSION,
        "latent_dim": cfg.latent_dim,
        "seed": cfg.seed,
        "beta_c_rec": cfg.beta_c_rec,
        "config": dataclasses.asdict(cfg),
        "parameters": [{"name": p.name, "shape": list(p.value.shape)} for p in codec.parameters()],
        "agent": agent_info or {},
    }


def checkpoint_bytes(codec: JsccCodec, agent_info: dict | None = None) -> bytes:
    header = json.dumps(_header(codec, agent_info), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    parts += [np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in codec.parameters()]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_checkpoint(codec: JsccCodec, path, agent_info: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(checkpoint_bytes(codec, agent_info))
    tmp.replace(path)
    return path


def read_header(blob: bytes) -> tuple[dict, int]:
    if len(blob) < len(MAGIC) + 4 + _DIGEST:
        raise CheckpointError("checkpoint truncated: checksum failure")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum failure")
    if body[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a codec checkpoint")
    (hlen,) = struct.unpack_from("<I", body, len(MAGIC))
    start = len(MAGIC) + 4
    header = json.loads(body[start:start + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {header.get('format_version')} "
                              f"does not match supported version {FORMAT_VERSION}")
    return header, start + hlen


def load_checkpoint(path) -> tuple[JsccCodec, dict]:
    """Returns the rebuilt codec and the full header."""
    blob = Path(path).read_bytes()
    header, offset = read_header(blob)
    cfg = header["config"]
    cfg["hidden_dims"] = tuple(cfg["hidden_dims"])
    cfg["image_dims"] = tuple(cfg["image_dims"])
    codec = JsccCodec.build(CodecConfig(**cfg))
    params = codec.parameters()
    listed = header["parameters"]
    if [(e["name"], tuple(e["shape"])) for e in listed] != [(p.name, p.value.shape) for p in params]:
        raise CheckpointError("parameter layout does not match the configured architecture")
    body_end = len(blob) - _DIGEST
    for p in params:
        nbytes = p.value.size * 8
        if offset + nbytes > body_end:
            raise CheckpointError("parameter data truncated")
        p.value[...] = np.frombuffer(blob, dtype="<f8", count=p.value.size, offset=offset).reshape(p.value.shape)
        offset += nbytes
    if offset != body_end:
        raise CheckpointError("unexpected trailing data")
    return codec, header


def parameter_checksum(codec: JsccCodec) -> str:
    h = hashlib.sha256()
    for p in codec.parameters():
        h.update(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    return h.hexdigest()
