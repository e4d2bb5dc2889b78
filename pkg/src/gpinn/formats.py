"""
산출물 파일 형식 (docs/formats.md 참고)

바이너리 파일은 모두 little-endian 이며 4바이트 magic + uint32 version 으로 시작합니다.
"""

import csv
import json
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import FormatError
from .network import MlpParams

PARAMS_MAGIC = b"GPNP"
FIELD_MAGIC = b"GPRF"
CHECKPOINT_MAGIC = b"GPCK"
VERSION = 1

_F8 = np.dtype("<f8")


def _atomic_write(path: Path, payload: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.path}: 파일이 잘렸습니다 (offset {self.pos})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype=_F8).astype(np.float64)

    def header(self, magic: bytes):
        got = self.take(4)
        if got != magic:
            raise FormatError(f"{self.path}: magic 불일치 ({got!r} != {magic!r})")
        (version,) = self.unpack("<I")
        if version != VERSION:
            raise FormatError(f"{self.path}: 지원하지 않는 버전 {version}")


def _params_bytes(params: MlpParams) -> bytes:
    sizes = params.layer_sizes
    head = struct.pack("<I", len(sizes)) + struct.pack(f"<{len(sizes)}I", *sizes)
    return head + params.flatten().astype(_F8).tobytes()


def _read_params(reader: _Reader) -> MlpParams:
    (n_layers,) = reader.unpack("<I")
    sizes = reader.unpack(f"<{n_layers}I")
    n = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    return MlpParams.from_flat(sizes, reader.floats(n))


def save_params(path, params: MlpParams):
    """GPNP | version | n_layers | sizes | float64 flat"""
    _atomic_write(Path(path), PARAMS_MAGIC + struct.pack("<I", VERSION) + _params_bytes(params))


def load_params(path) -> MlpParams:
    reader = _Reader(Path(path).read_bytes(), path)
    reader.header(PARAMS_MAGIC)
    return _read_params(reader)


def save_field(path, axes: Sequence[np.ndarray], values: np.ndarray):
    """GPRF | version | ndim | 축 길이들 | 축 값들 | 필드 값 (C order)"""
    axes = [np.asarray(a, dtype=np.float64) for a in axes]
    values = np.asarray(values, dtype=np.float64)
    shape = tuple(len(a) for a in axes)
    if values.shape != shape:
        raise FormatError(f"필드 모양 {values.shape} 이 축 길이 {shape} 와 다릅니다")
    payload = [FIELD_MAGIC, struct.pack("<II", VERSION, len(axes)), struct.pack(f"<{len(axes)}I", *shape)]
    payload += [a.astype(_F8).tobytes() for a in axes]
    payload.append(values.astype(_F8).tobytes())
    _atomic_write(Path(path), b"".join(payload))


def load_field(path) -> Tuple[List[np.ndarray], np.ndarray]:
    reader = _Reader(Path(path).read_bytes(), path)
    reader.header(FIELD_MAGIC)
    (ndim,) = reader.unpack("<I")
    shape = reader.unpack(f"<{ndim}I")
    axes = [reader.floats(n) for n in shape]
    values = reader.floats(int(np.prod(shape))).reshape(shape)
    return axes, values


@dataclass
class TrainingCheckpoint:
    """재개 가능한 학습 상태"""

    iteration: int
    params: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    adam_t: int
    learning_rate: float
    meta: Dict = field(default_factory=dict)


def checkpoint_bytes(ckpt: TrainingCheckpoint) -> bytes:
    n = len(ckpt.params)
    if len(ckpt.adam_m) != n or len(ckpt.adam_v) != n:
        raise FormatError("체크포인트 배열 길이가 다릅니다")
    meta = json.dumps(ckpt.meta, ensure_ascii=False, default=_json_default).encode("utf-8")
    return b"".join([
        CHECKPOINT_MAGIC,
        struct.pack("<IQI", VERSION, ckpt.iteration, n),
        np.asarray(ckpt.params, dtype=_F8).tobytes(),
        np.asarray(ckpt.adam_m, dtype=_F8).tobytes(),
        np.asarray(ckpt.adam_v, dtype=_F8).tobytes(),
        struct.pack("<Qd", ckpt.adam_t, ckpt.learning_rate),
        struct.pack("<I", len(meta)),
        meta,
    ])


def save_checkpoint(path, ckpt: TrainingCheckpoint):
    """GPCK | version | iteration u64 | n u32 | params | m | v | t u64 | lr f64 | meta_len u32 | meta JSON"""
    _atomic_write(Path(path), checkpoint_bytes(ckpt))


def load_checkpoint(path) -> TrainingCheckpoint:
    reader = _Reader(Path(path).read_bytes(), path)
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: 체크포인트 파일이 아닙니다")
    version, iteration, n = reader.unpack("<IQI")
    if version != VERSION:
        raise FormatError(f"{path}: 지원하지 않는 버전 {version}")
    params = reader.floats(n)
    m = reader.floats(n)
    v = reader.floats(n)
    adam_t, lr = reader.unpack("<Qd")
    (meta_len,) = reader.unpack("<I")
    meta = json.loads(reader.take(meta_len).decode("utf-8")) if meta_len else {}
    return TrainingCheckpoint(int(iteration), params, m, v, int(adam_t), float(lr), meta)


def format_number(value) -> str:
    """CSV 숫자: 64비트 전체 정밀도 (유효숫자 17자리)"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        return format(value, ".17g")
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, ensure_ascii=False, default=_json_default)
        f.write("\n")


def read_json(path) -> Optional[Dict]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
