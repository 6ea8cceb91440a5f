"""Flat binary checkpoint of a multi-head network.

Layout (all integers little-endian uint32, all reals little-endian float64)::

    b"FMT1"
    n_shared_layers, n_tasks, n_arrays
    repeated n_arrays times:
        ndim, dim_0 ... dim_{ndim-1}, then prod(dims) reals in C order

Arrays appear as trunk ``W_0, b_0, ...``, then each head's ``W, b``, then the
task-weight vector. Optimizer state is not stored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .nn import Activation, AdamState, DenseParams, MtlNetwork, OptState

MAGIC = b"FMT1"


def _arrays(net: MtlNetwork) -> list[np.ndarray]:
    return net.parameter_arrays() + [net.task_weights]


def dumps(net: MtlNetwork) -> bytes:
    arrays = _arrays(net)
    parts = [MAGIC, struct.pack("<III", net.shared.n_layers, net.n_tasks, len(arrays))]
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        parts.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def save_checkpoint(net: MtlNetwork, path) -> None:
    Path(path).write_bytes(dumps(net))


def loads(blob: bytes, head_activation: Activation = Activation.SOFTMAX2) -> MtlNetwork:
    if blob[:4] != MAGIC:
        raise FormatError("not an FMT1 checkpoint")
    pos = 4
    n_shared, n_tasks, n_arrays = struct.unpack_from("<III", blob, pos)
    pos += 12
    arrays = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack_from("<I", blob, pos)
        shape = struct.unpack_from(f"<{ndim}I", blob, pos + 4)
        pos += 4 + 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64))
        pos += 8 * count
    if pos != len(blob) or n_arrays != 2 * n_shared + 2 * n_tasks + 1:
        raise FormatError("checkpoint length or array count is inconsistent")
    shared = DenseParams(arrays[0:2 * n_shared:2], arrays[1:2 * n_shared:2], [Activation.RELU] * n_shared)
    heads = []
    for t in range(n_tasks):
        W, b = arrays[2 * n_shared + 2 * t], arrays[2 * n_shared + 2 * t + 1]
        heads.append(DenseParams([W], [b], [head_activation]))
    opt = OptState(AdamState.zeros_like(shared), [AdamState.zeros_like(h) for h in heads])
    return MtlNetwork(shared, heads, arrays[-1], opt)


def load_checkpoint(path, head_activation: Activation = Activation.SOFTMAX2) -> MtlNetwork:
    return loads(Path(path).read_bytes(), head_activation)
