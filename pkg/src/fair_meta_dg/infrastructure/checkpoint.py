"""바이너리 체크포인트 포맷.

    FEEDPK <version>\\n
    @<key> <value>\\n            (메타데이터, 0 개 이상)
    <name> <rank> <dim>...\\n    (텐서 헤더)
    <row-major little-endian float64 payload>
    ...
    END\\n
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger

from fair_meta_dg.domain.config import Stage1Architecture
from fair_meta_dg.domain.exceptions import ShapeError
from fair_meta_dg.infrastructure.exceptions import CheckpointFormatError, CheckpointVersionError
from fair_meta_dg.infrastructure.logging_utils import log_function_call
from fair_meta_dg.learning.disentangle import DisentangleModel, LatentDims
from fair_meta_dg.learning.preprocessing import FeatureStats
from fair_meta_dg.learning.tensor import ParameterStore

MAGIC = b"FEEDPK"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)
END_MARKER = b"END"
PAYLOAD_DTYPE = np.dtype("<f8")

NORM_MEAN = "norm/mean"
NORM_STD = "norm/std"


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def store(self, prefix: str = "") -> ParameterStore:
        return ParameterStore(
            {name: value for name, value in self.tensors.items() if name.startswith(prefix)}
        )


def _encode(checkpoint: Checkpoint) -> bytes:
    chunks = [MAGIC + f" {checkpoint.version}\n".encode("ascii")]
    for key, value in checkpoint.metadata.items():
        if any(ch.isspace() for ch in key) or "\n" in value:
            raise CheckpointFormatError(f"metadata entry {key!r} cannot be written on one line")
        chunks.append(f"@{key} {value}\n".encode("utf-8"))
    for name, value in checkpoint.tensors.items():
        if not name or any(ch.isspace() for ch in name):
            raise CheckpointFormatError(f"tensor name {name!r} must be non-empty without whitespace")
        array = np.asarray(value, dtype=np.float64)
        header = " ".join([name, str(array.ndim), *(str(d) for d in array.shape)])
        chunks.append(header.encode("utf-8") + b"\n")
        chunks.append(np.ascontiguousarray(array).astype(PAYLOAD_DTYPE).tobytes(order="C"))
    chunks.append(END_MARKER + b"\n")
    return b"".join(chunks)


@log_function_call
def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_encode(checkpoint))
    return path


class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.pos = 0
        self.source = source

    def line(self) -> bytes:
        end = self.data.find(b"\n", self.pos)
        if end < 0:
            raise CheckpointFormatError(f"{self.source}: truncated file (missing END marker)")
        out = self.data[self.pos : end]
        self.pos = end + 1
        return out

    def take(self, size: int, what: str) -> bytes:
        remaining = len(self.data) - self.pos
        if remaining < size:
            raise CheckpointFormatError(
                f"{self.source}: payload length mismatch for {what}: "
                f"needs {size} bytes, only {remaining} remain"
            )
        out = self.data[self.pos : self.pos + size]
        self.pos += size
        return out


def _parse_magic(line: bytes, source: str) -> int:
    parts = line.split(b" ")
    if len(parts) != 2 or parts[0] != MAGIC:
        raise CheckpointFormatError(f"{source}: bad magic, not a checkpoint file")
    try:
        version = int(parts[1])
    except ValueError:
        raise CheckpointFormatError(f"{source}: unreadable format version {parts[1]!r}") from None
    if version not in SUPPORTED_VERSIONS:
        supported = ", ".join(str(v) for v in SUPPORTED_VERSIONS)
        raise CheckpointVersionError(
            f"{source}: unsupported checkpoint version {version} (supported: {supported})"
        )
    return version


def _parse_header(line: bytes, source: str) -> tuple[str, tuple[int, ...]]:
    parts = line.decode("utf-8", errors="replace").split(" ")
    try:
        name, rank = parts[0], int(parts[1])
        shape = tuple(int(d) for d in parts[2:])
    except (IndexError, ValueError):
        raise CheckpointFormatError(f"{source}: malformed tensor header {line!r}") from None
    if len(shape) != rank or any(d < 0 for d in shape):
        raise CheckpointFormatError(f"{source}: tensor {name} declares rank {rank} but shape {shape}")
    return name, shape


@log_function_call
def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    reader = _Reader(path.read_bytes(), path.name)
    version = _parse_magic(reader.line(), path.name)
    checkpoint = Checkpoint(version=version)

    while True:
        line = reader.line()
        if line == END_MARKER:
            break
        if line.startswith(b"@"):
            key, _, value = line[1:].decode("utf-8").partition(" ")
            checkpoint.metadata[key] = value
            continue
        name, shape = _parse_header(line, path.name)
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = reader.take(count * PAYLOAD_DTYPE.itemsize, f"tensor {name}")
        checkpoint.tensors[name] = (
            np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float64).reshape(shape)
        )

    if reader.pos != len(reader.data):
        raise CheckpointFormatError(f"{path.name}: unexpected bytes after END marker")
    logger.debug("체크포인트 로드", path=str(path), tensors=len(checkpoint.tensors))
    return checkpoint


# --- 모델 <-> 체크포인트 ---


def _join(values: tuple[int, ...]) -> str:
    return ",".join(str(v) for v in values)


def _split(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v)


def stage1_checkpoint(
    model: DisentangleModel,
    stats: FeatureStats | None = None,
    config_fingerprint: str | None = None,
) -> Checkpoint:
    """아홉 개 stage-1 store 와 dims, 정규화 통계를 담습니다."""
    d = model.dims
    metadata = {
        "kind": "stage1",
        "dims": _join((d.feature, d.semantic, d.content, d.style, d.sensitive)),
        "hidden": _join(model.architecture.hidden),
        "classifier_hidden": _join(model.architecture.classifier_hidden),
        "discriminator_hidden": _join(model.architecture.discriminator_hidden),
    }
    if config_fingerprint:
        metadata["fingerprint"] = config_fingerprint
    checkpoint = Checkpoint(tensors=model.params.state(), metadata=metadata)
    if stats is not None:
        checkpoint.tensors[NORM_MEAN] = stats.mean.copy()
        checkpoint.tensors[NORM_STD] = stats.std.copy()
    return checkpoint


def model_from_checkpoint(checkpoint: Checkpoint) -> DisentangleModel:
    try:
        feature, semantic, content, style, sensitive = _split(checkpoint.metadata["dims"])
        architecture = Stage1Architecture(
            semantic_dim=semantic,
            hidden=_split(checkpoint.metadata["hidden"]),
            classifier_hidden=_split(checkpoint.metadata["classifier_hidden"]),
            discriminator_hidden=_split(checkpoint.metadata["discriminator_hidden"]),
        )
    except (KeyError, ValueError) as e:
        raise CheckpointFormatError(f"stage-1 checkpoint metadata incomplete: {e}") from e
    dims = LatentDims(feature, semantic, content, style, sensitive)
    model = DisentangleModel.create(dims, architecture, seed=0)
    try:
        model.params.load_state(checkpoint.tensors)
    except KeyError as e:
        raise CheckpointFormatError(f"stage-1 checkpoint is missing a tensor: {e}") from e
    except ShapeError as e:
        raise CheckpointFormatError(f"stage-1 checkpoint tensor does not fit the stored dims: {e}") from e
    return model


def classifier_checkpoint(
    theta: ParameterStore,
    stats: FeatureStats | None = None,
    config_fingerprint: str | None = None,
    method: str | None = None,
) -> Checkpoint:
    metadata = {"kind": "classifier"}
    if method:
        metadata["method"] = method
    if config_fingerprint:
        metadata["fingerprint"] = config_fingerprint
    checkpoint = Checkpoint(tensors=theta.state(), metadata=metadata)
    if stats is not None:
        checkpoint.tensors[NORM_MEAN] = stats.mean.copy()
        checkpoint.tensors[NORM_STD] = stats.std.copy()
    return checkpoint


def classifier_from_checkpoint(checkpoint: Checkpoint) -> ParameterStore:
    theta = checkpoint.store("f/")
    if not len(theta):
        raise CheckpointFormatError("checkpoint holds no classifier tensors")
    return theta


def stats_from_checkpoint(checkpoint: Checkpoint) -> FeatureStats | None:
    if NORM_MEAN not in checkpoint.tensors or NORM_STD not in checkpoint.tensors:
        return None
    return FeatureStats(mean=checkpoint.tensors[NORM_MEAN], std=checkpoint.tensors[NORM_STD])
