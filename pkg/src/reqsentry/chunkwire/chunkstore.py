"""Directory-backed storage of serialized models as capped chunk rows.

Each model is a subdirectory of fixed-cap chunk files named by index; loading
concatenates them in index order. A missing index is an explicit error naming
the gap, never a silently shorter model.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import ReqSentryError
from .frames import PIECE_CAP


class IncompleteModelError(ReqSentryError):
    def __init__(self, model_id: str, missing_index: int):
        super().__init__(f"model {model_id!r} is missing chunk {missing_index}")
        self.model_id = model_id
        self.missing_index = missing_index


class ModelChunkStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _chunk_path(self, model_id: str, index: int) -> Path:
        return self.root / model_id / f"{index:06d}.chunk"

    def chunk_ids(self, model_id: str) -> list[int]:
        model_dir = self.root / model_id
        if not model_dir.is_dir():
            return []
        return sorted(int(p.stem) for p in model_dir.glob("*.chunk"))


def store_model_chunks(
    data: bytes, store: ModelChunkStore, model_id: str = "model", cap: int = PIECE_CAP
) -> list[int]:
    """Split model bytes into <=cap rows; returns the chunk indices written."""
    if cap < 1:
        raise ReqSentryError(f"cap {cap} must be at least 1")
    (store.root / model_id).mkdir(parents=True, exist_ok=True)
    count = max(1, -(-len(data) // cap))
    ids = []
    for i in range(count):
        piece = data[i * cap : (i + 1) * cap]
        store._chunk_path(model_id, i).write_bytes(piece)
        ids.append(i)
    return ids


def load_model_chunks(
    store: ModelChunkStore, model_id: str = "model", ids: list[int] | None = None
) -> bytes:
    """Concatenate chunk rows in index order; a gap raises IncompleteModelError."""
    if ids is None:
        ids = store.chunk_ids(model_id)
        if not ids:
            raise IncompleteModelError(model_id, 0)
    expected = max(ids) + 1
    present = set(ids)
    parts = []
    for i in range(expected):
        path = store._chunk_path(model_id, i)
        if i not in present or not path.exists():
            raise IncompleteModelError(model_id, i)
        parts.append(path.read_bytes())
    return b"".join(parts)
