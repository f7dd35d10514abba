"""Framed TCP serving fabric: chunked messages, pooled reassembly, and the
long-running external process that hosts the classifier."""

from .frames import (
    PIECE_CAP,
    Frame,
    FrameKind,
    FramingError,
    ProtocolError,
    chunk,
    decode_error_payload,
    decode_frame,
    decode_infer_payload,
    decode_result_payload,
    decode_train_payload,
    encode_error_payload,
    encode_frame,
    encode_infer_payload,
    encode_result_payload,
    encode_train_payload,
    read_frame,
)
from .reassembly import Reassembler
from .client import InvokeTimeoutError, RemoteError, invoke, new_task_id
from .server import BatchPolicy, ExternalProcess, ErrorCode
from .chunkstore import IncompleteModelError, ModelChunkStore, load_model_chunks, store_model_chunks

__all__ = [
    "PIECE_CAP",
    "Frame",
    "FrameKind",
    "FramingError",
    "ProtocolError",
    "chunk",
    "decode_error_payload",
    "decode_frame",
    "decode_infer_payload",
    "decode_result_payload",
    "decode_train_payload",
    "encode_error_payload",
    "encode_frame",
    "encode_infer_payload",
    "encode_result_payload",
    "encode_train_payload",
    "read_frame",
    "Reassembler",
    "InvokeTimeoutError",
    "RemoteError",
    "invoke",
    "new_task_id",
    "BatchPolicy",
    "ExternalProcess",
    "ErrorCode",
    "IncompleteModelError",
    "ModelChunkStore",
    "load_model_chunks",
    "store_model_chunks",
]
