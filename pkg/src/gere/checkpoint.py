"""Binary model checkpoints: config, named float32 tensor table, Adam state,
step counter and the vocab checksum. Round-trips are bit-identical."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from . import binio, nn
from .errors import DataError
from .model import ModelConfig, Seq2SeqModel

_MAGIC = b"GERECKPT"
_VERSION = 1


def _write_tensor_data(buf: bytearray, array: np.ndarray) -> None:
    data = np.ascontiguousarray(array, dtype="<f4")
    buf += data.tobytes()


def checkpoint_bytes(model: Seq2SeqModel, optimizer: Optional[nn.Adam] = None,
                     step: int = 0) -> bytes:
    if model.dtype != np.float32:
        raise ValueError("only float32 models are checkpointable; the file format "
                         "stores 32-bit floats and round-trips must be exact")
    buf = bytearray(_MAGIC)
    binio.write_u32(buf, _VERSION)
    binio.write_u32(buf, model.vocab_checksum)
    binio.write_u64(buf, step)
    binio.write_str(buf, model.config.to_kv())
    names = sorted(model.params)
    binio.write_u32(buf, len(names))
    for name in names:
        tensor = model.params[name]
        binio.write_str(buf, name)
        binio.write_u8(buf, tensor.data.ndim)
        for dim in tensor.data.shape:
            binio.write_u32(buf, dim)
        _write_tensor_data(buf, tensor.data)
    binio.write_u8(buf, 1 if optimizer is not None else 0)
    if optimizer is not None:
        binio.write_u64(buf, optimizer.t)
        for name in names:
            _write_tensor_data(buf, optimizer.m[name])
            _write_tensor_data(buf, optimizer.v[name])
    return bytes(buf)


def save_checkpoint(path, model: Seq2SeqModel, optimizer: Optional[nn.Adam] = None,
                    step: int = 0) -> None:
    Path(path).write_bytes(checkpoint_bytes(model, optimizer, step))


def load_checkpoint(path, expected_vocab_checksum: Optional[int] = None
                    ) -> tuple[Seq2SeqModel, Optional[dict], int]:
    """Returns (model, adam_state_or_None, step). Forward passes of the loaded
    model are bit-identical to the saved one."""
    data = Path(path).read_bytes()
    r = binio.Reader(data, str(path))
    if r.take(len(_MAGIC)) != _MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    vocab_checksum = r.u32()
    if expected_vocab_checksum is not None and vocab_checksum != expected_vocab_checksum:
        raise DataError(f"{path}: vocab checksum mismatch (file {vocab_checksum:#010x}, "
                        f"vocab {expected_vocab_checksum:#010x})")
    step = r.u64()
    config = ModelConfig.from_kv(r.str_())
    model = Seq2SeqModel(config, vocab_checksum=vocab_checksum)
    n_tensors = r.u32()
    names = sorted(model.params)
    if n_tensors != len(names):
        raise DataError(f"{path}: expected {len(names)} tensors, file has {n_tensors}")

    def read_tensor(expect_name: str, expect_shape: tuple) -> np.ndarray:
        count = int(np.prod(expect_shape)) if expect_shape else 1
        raw = r.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").reshape(expect_shape).copy()

    for name in names:
        got = r.str_()
        if got != name:
            raise DataError(f"{path}: tensor order mismatch ({got!r} vs {name!r})")
        ndim = r.u8()
        shape = tuple(r.u32() for _ in range(ndim))
        if shape != model.params[name].data.shape:
            raise DataError(f"{path}: tensor {name!r} shape {shape} does not match "
                            f"config-derived shape {model.params[name].data.shape}")
        model.params[name].data = read_tensor(name, shape)
    opt_state = None
    if r.u8():
        t = r.u64()
        m = {}
        v = {}
        for name in names:
            shape = model.params[name].data.shape
            m[name] = read_tensor(name, shape)
            v[name] = read_tensor(name, shape)
        opt_state = {"t": t, "m": m, "v": v}
    if not r.done():
        raise DataError(f"{path}: {len(data) - r.pos} trailing bytes")
    return model, opt_state, step
