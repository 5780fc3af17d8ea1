"""
Checkpoint container

Layout (little-endian):
    magic b'TMAPCKPT' | u32 version | u32 tensor count | u32 header length | header JSON
    then per tensor: u16 name length | name | u8 ndim | u32 dims... | float32 values
"""
import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from src.config import AddressConfig, Config, ModelConfig
from src.errors import InputError
from src.model.tensor import Tensor
from src.model.transformer import ModelParams, init_params


class CheckpointMeta(BaseModel):
    """Everything needed to rebuild the model and its input encoding"""

    model: ModelConfig
    address: Optional[AddressConfig] = None
    history_length: Optional[int] = None
    k_max: Optional[int] = None


class _Reader:
    def __init__(self, payload: bytes, path: str):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.payload):
            raise InputError(f"{self.path}: checkpoint truncated at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(path: Union[str, Path], params: ModelParams, address_config: Optional[AddressConfig] = None,
                    history_length: Optional[int] = None, k_max: Optional[int] = None) -> CheckpointMeta:
    """
    Write every parameter tensor as float32 plus a JSON header with the configs

    Returns:
        The header that was written
    """
    meta = CheckpointMeta(model=params.config, address=address_config,
                          history_length=history_length, k_max=k_max)
    header = meta.model_dump_json().encode('utf-8')
    chunks = [
        Config.CHECKPOINT_MAGIC,
        struct.pack('<III', Config.CHECKPOINT_VERSION, len(params), len(header)),
        header,
    ]
    for name, tensor in params.items():
        encoded = name.encode('utf-8')
        data = np.ascontiguousarray(tensor.data, dtype='<f4')
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', data.ndim))
        chunks.append(struct.pack(f'<{data.ndim}I', *data.shape))
        chunks.append(data.tobytes())
    with open(path, 'wb') as f:
        f.write(b''.join(chunks))
    return meta


def load_checkpoint(path: Union[str, Path]) -> Tuple[ModelParams, CheckpointMeta]:
    """
    Read a checkpoint written by save_checkpoint

    Tensors are checked against the shapes a fresh model of the stored config
    would have.

    Raises:
        InputError: wrong magic/version, truncated file, or tensors that do not match the config
    """
    path = str(path)
    with open(path, 'rb') as f:
        reader = _Reader(f.read(), path)

    magic = reader.take(len(Config.CHECKPOINT_MAGIC))
    if magic != Config.CHECKPOINT_MAGIC:
        raise InputError(f"{path}: not a model checkpoint (bad magic {magic!r})")
    version, count, header_len = reader.unpack('<III')
    if version != Config.CHECKPOINT_VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    try:
        meta = CheckpointMeta.model_validate(json.loads(reader.take(header_len).decode('utf-8')))
    except (ValueError, ValidationError) as e:
        raise InputError(f"{path}: invalid checkpoint header ({e})") from None

    expected = init_params(meta.model, seed=0)
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack('<H')
        name = reader.take(name_len).decode('utf-8')
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack(f'<{ndim}I') if ndim else ()
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(4 * size), dtype='<f4').reshape(shape)
        if name not in expected.tensors:
            raise InputError(f"{path}: unexpected tensor {name!r}")
        if tuple(shape) != expected[name].shape:
            raise InputError(f"{path}: tensor {name!r} has shape {tuple(shape)}, "
                             f"config expects {expected[name].shape}")
        tensors[name] = Tensor(values.astype(meta.model.dtype), requires_grad=True, name=name)

    missing = [name for name in expected if name not in tensors]
    if missing:
        raise InputError(f"{path}: checkpoint is missing tensors {missing[:3]}")
    if reader.offset != len(reader.payload):
        raise InputError(f"{path}: {len(reader.payload) - reader.offset} trailing bytes after last tensor")
    return ModelParams(meta.model, OrderedDict((name, tensors[name]) for name in expected)), meta
