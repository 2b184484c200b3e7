"""
Little-endian binary files: embedding models (MUSL), one-vs-rest models (OVR1),
per-song frame matrices (FRMS) and k-means codebooks (CBK1).

Every file is a fixed struct header followed by float32 arrays in row-major
order. Readers check the magic, the declared sizes against the payload and
reject trailing bytes.
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from core.baselines import OvrModel
from core.embedding_model import EmbeddingModel
from core.errors import FileFormatError
from core.featurizer import Codebook

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"MUSL"
MODEL_VERSION = 1
OVR_MAGIC = b"OVR1"
FRAMES_MAGIC = b"FRMS"
CODEBOOK_MAGIC = b"CBK1"

# magic, version, d, |A|, |T|, |S|, C
_MODEL_HEADER = struct.Struct("<4sIIIIIf")
# magic, rows, cols
_MATRIX_HEADER = struct.Struct("<4sII")

_F32 = np.dtype("<f4")

PathLike = Union[str, Path]


def _read_bytes(path: PathLike) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def _write_bytes(path: PathLike, header: bytes, *arrays: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        for arr in arrays:
            f.write(np.ascontiguousarray(arr, dtype=_F32).tobytes(order="C"))
    return path


def _unpack_header(data: bytes, layout: struct.Struct, magic: bytes, path: PathLike) -> tuple:
    if len(data) < layout.size:
        raise FileFormatError(f"{path}: truncated header ({len(data)} bytes)")
    fields = layout.unpack_from(data, 0)
    if fields[0] != magic:
        raise FileFormatError(f"{path}: bad magic {fields[0]!r} (expected {magic!r})")
    return fields[1:]


def _take_arrays(data: bytes, offset: int, shapes, path: PathLike):
    need = offset + sum(4 * r * c for r, c in shapes)
    if len(data) < need:
        raise FileFormatError(f"{path}: truncated payload ({len(data)} of {need} bytes)")
    if len(data) > need:
        raise FileFormatError(f"{path}: {len(data) - need} trailing bytes")
    arrays = []
    for rows, cols in shapes:
        count = rows * cols
        arr = np.frombuffer(data, dtype=_F32, count=count, offset=offset).reshape(rows, cols)
        arrays.append(arr.astype(np.float32))
        offset += 4 * count
    return arrays


# ---------------------------------------------------------------------------
# Embedding model
# ---------------------------------------------------------------------------

def save_model(model: EmbeddingModel, path: PathLike) -> Path:
    """Write A, T, V as float32; a float64 model is rounded on the way out."""
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC, MODEL_VERSION, model.d, model.n_artists, model.n_tags, model.feat_dim, model.C
    )
    path = _write_bytes(path, header, model.A, model.T, model.V)
    logger.info("Saved %r to %s", model, path)
    return path


def load_model(path: PathLike) -> EmbeddingModel:
    data = _read_bytes(path)
    version, d, n_artists, n_tags, feat_dim, C = _unpack_header(data, _MODEL_HEADER, MODEL_MAGIC, path)
    if version != MODEL_VERSION:
        raise FileFormatError(f"{path}: unsupported model version {version}")
    if d < 1 or feat_dim < 1:
        raise FileFormatError(f"{path}: bad dimensions d={d}, |S|={feat_dim}")
    A, T, V = _take_arrays(
        data, _MODEL_HEADER.size, [(d, n_artists), (d, n_tags), (d, feat_dim)], path
    )
    # C was stored as f32; keep that value so a second save is byte-identical
    return EmbeddingModel(A, T, V, float(np.float32(C)))


# ---------------------------------------------------------------------------
# Row-major float matrices with a 3-field header
# ---------------------------------------------------------------------------

def _save_matrix(magic: bytes, M: np.ndarray, path: PathLike) -> Path:
    M = np.asarray(M)
    if M.ndim != 2:
        raise FileFormatError(f"expected a matrix, got shape {M.shape}")
    return _write_bytes(path, _MATRIX_HEADER.pack(magic, M.shape[0], M.shape[1]), M)


def _load_matrix(magic: bytes, path: PathLike) -> np.ndarray:
    data = _read_bytes(path)
    rows, cols = _unpack_header(data, _MATRIX_HEADER, magic, path)
    (M,) = _take_arrays(data, _MATRIX_HEADER.size, [(rows, cols)], path)
    return M


def save_ovr(model: OvrModel, path: PathLike) -> Path:
    return _save_matrix(OVR_MAGIC, model.W, path)


def load_ovr(path: PathLike, label_kind: str = "tag") -> OvrModel:
    """The OVR1 file does not record the label kind; the caller supplies it."""
    return OvrModel(_load_matrix(OVR_MAGIC, path), label_kind)


def save_frames(frames: np.ndarray, path: PathLike) -> Path:
    frames = np.asarray(frames)
    if frames.ndim == 1 and frames.size == 0:
        frames = frames.reshape(0, 0)
    return _save_matrix(FRAMES_MAGIC, frames, path)


def load_frames(path: PathLike) -> np.ndarray:
    return _load_matrix(FRAMES_MAGIC, path)


def save_codebook(codebook: Codebook, path: PathLike) -> Path:
    return _save_matrix(CODEBOOK_MAGIC, codebook.centers, path)


def load_codebook(path: PathLike) -> Codebook:
    return Codebook(_load_matrix(CODEBOOK_MAGIC, path).astype(np.float64))


def model_file_size(d: int, n_artists: int, n_tags: int, feat_dim: int) -> int:
    """Bytes of a MUSL file, header included."""
    return _MODEL_HEADER.size + 4 * d * (n_artists + n_tags + feat_dim)

