"""Session-based HTTP API exposing the refinement loop to the interactive UI.

Control plane is JSON; array payloads use the UGSTACK dtype/dims vocabulary
inside a length-prefixed binary bundle (8-byte little-endian header length,
JSON header naming each array, then the raw little-endian C-order payloads).
"""

from __future__ import annotations

import json
import struct
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Form, HTTPException, Request, Response, UploadFile

from ugseg import metrics
from ugseg.core import (
    BinaryMask,
    FormatError,
    ProbabilityGroup,
    RefineConfig,
    ScribbleSet,
    Stack,
    write_stack,
    _DTYPES,
)
from ugseg.pipeline import SessionLog, refine_slice
from ugseg.uncertainty import fuse_predictions, next_slice, rank_slices

BUNDLE_CONTENT_TYPE = "application/x-ugstack-bundle"

_DTYPE_NAMES = {np.dtype("<f4"): "f32", np.dtype("u1"): "u8"}


def encode_bundle(arrays: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries = []
    payloads = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_NAMES:
            raise ValueError(f"bundle arrays must be f32 or u8, got {arr.dtype}")
        raw = arr.tobytes(order="C")
        entries.append({
            "name": name,
            "dtype": _DTYPE_NAMES[arr.dtype],
            "dims": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "arrays": entries}).encode()
    return struct.pack("<Q", len(header)) + header + b"".join(payloads)


def decode_bundle(data: bytes):
    (hlen,) = struct.unpack_from("<Q", data, 0)
    header = json.loads(data[8:8 + hlen].decode())
    base = 8 + hlen
    arrays = {}
    for e in header["arrays"]:
        dt = _DTYPES[e["dtype"]]
        start = base + e["offset"]
        arrays[e["name"]] = np.frombuffer(
            data[start:start + e["nbytes"]], dtype=dt
        ).reshape(e["dims"])
    return arrays, header["meta"]


def _parse_upload(header_bytes: bytes, raw_bytes: bytes):
    header = json.loads(header_bytes.decode())
    if header.get("magic") != "UGSTACK1":
        raise FormatError("bad magic")
    dt = _DTYPES.get(header.get("dtype"))
    if dt is None:
        raise FormatError(f"unknown dtype {header.get('dtype')!r}")
    dims = header["dims"]
    expected = int(np.prod(dims)) * dt.itemsize
    if len(raw_bytes) != expected:
        raise FormatError(f"payload size mismatch: expected {expected}, got {len(raw_bytes)}")
    return np.frombuffer(raw_bytes, dtype=dt).reshape(dims), header


@dataclass
class Session:
    id: str
    stack: Stack
    probgroup: ProbabilityGroup
    cfg: RefineConfig
    fused: object
    queue: object
    mask: np.ndarray
    log: SessionLog
    history: list = field(default_factory=list)
    pending: dict | None = None  # current fetched slice awaiting commit
    state: str = "active"
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, data_dir: str | Path | None = None):
        self.sessions: dict[str, Session] = {}
        self.data_dir = Path(data_dir) if data_dir else None

    def create(self, stack: Stack, probgroup: ProbabilityGroup, cfg: RefineConfig) -> Session:
        if probgroup.data.shape[1:] != stack.data.shape:
            raise FormatError(
                f"dims mismatch: probgroup {probgroup.data.shape[1:]} vs stack {stack.data.shape}"
            )
        fused = fuse_predictions(probgroup, cfg.threshold)
        queue = rank_slices(fused, cfg)
        sid = uuid.uuid4().hex
        log = SessionLog(mode="normalized", config=cfg.to_json(),
                         queue=[[k, s] for k, s in queue.entries])
        sess = Session(sid, stack, probgroup, cfg, fused, queue,
                       fused.mask.data.copy(), log)
        self.sessions[sid] = sess
        if self.data_dir:
            d = self.data_dir / sid
            d.mkdir(parents=True, exist_ok=True)
            write_stack(stack, d / "stack")
            write_stack(probgroup, d / "probs")
            (d / "config.json").write_text(json.dumps(cfg.to_json()))
            self._persist(sess)
        return sess

    def get(self, sid: str) -> Session:
        sess = self.sessions.get(sid)
        if sess is None:
            raise KeyError(sid)
        return sess

    def _persist(self, sess: Session) -> None:
        if not self.data_dir:
            return
        d = self.data_dir / sess.id
        write_stack(BinaryMask(sess.mask), d / "mask")
        (d / "log.json").write_text(json.dumps(sess.log.to_json()))
        (d / "state.json").write_text(json.dumps({
            "state": sess.state,
            "history": sess.history,
        }))


def create_app(data_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="uncertainty-guided refinement service")
    store = SessionStore(data_dir)
    app.state.store = store

    def _get(sid: str) -> Session:
        try:
            return store.get(sid)
        except KeyError:
            raise HTTPException(404, f"unknown session {sid}")

    def _commit_pending(sess: Session) -> None:
        if sess.pending is None:
            return
        p = sess.pending
        sess.history.append([p["slice"], p["edited"]])
        sess.log.events.append({
            "slice": p["slice"], "score": p["score"],
            "edited": p["edited"], "rounds": p["rounds"],
        })
        sess.pending = None

    @app.post("/sessions")
    async def create_session(request: Request,
                             stack_header: UploadFile, stack_raw: UploadFile,
                             probs_header: UploadFile, probs_raw: UploadFile,
                             config: str = Form("{}")):
        try:
            stack_arr, sh = _parse_upload(await stack_header.read(), await stack_raw.read())
            probs_arr, _ = _parse_upload(await probs_header.read(), await probs_raw.read())
            if sh.get("kind") != "stack":
                raise FormatError(f"first upload must be kind 'stack', got {sh.get('kind')!r}")
            spacing = sh.get("spacing", [1.0, 1.0, 1.0])
            stack = Stack(stack_arr, pixel_spacing=(spacing[1], spacing[2]),
                          slice_spacing=spacing[0])
            cfg = RefineConfig.from_json(json.loads(config))
            sess = store.create(stack, ProbabilityGroup(probs_arr), cfg)
        except (FormatError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise HTTPException(400, f"malformed payload: {exc}")
        return {
            "id": sess.id,
            "num_slices": stack.num_slices,
            "cutoff": sess.queue.cutoff,
            "queue": [{"slice": k, "score": s} for k, s in sess.queue.entries],
        }

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        sess = _get(sid)
        with sess.lock:
            return {
                "id": sess.id,
                "state": sess.state,
                "num_slices": sess.stack.num_slices,
                "cutoff": sess.queue.cutoff,
                "history": sess.history,
                "current_slice": sess.pending["slice"] if sess.pending else None,
            }

    @app.get("/sessions/{sid}/slices/{k}")
    def get_slice_bundle(sid: str, k: int):
        sess = _get(sid)
        with sess.lock:
            if sess.state != "active":
                raise HTTPException(409, "session finished")
            if not (0 <= k < sess.stack.num_slices):
                raise HTTPException(404, f"slice {k} out of range")
            img = sess.stack.data[k]
            lo, hi = float(img.min()), float(img.max())
            scale = (hi - lo) if hi > lo else 1.0
            img_u8 = np.round((img - lo) / scale * 255.0).astype(np.uint8)
            score = dict(sess.queue.entries)[k]
            payload = encode_bundle(
                {
                    "image_u8": img_u8,
                    "mean": sess.fused.mean_map[k].astype(np.float32),
                    "variance": sess.fused.variance_map[k].astype(np.float32),
                    "mask": sess.mask[k].astype(np.uint8),
                },
                {"slice": k, "score": score, "intensity_range": [lo, hi]},
            )
        return Response(payload, media_type=BUNDLE_CONTENT_TYPE)

    @app.post("/sessions/{sid}/slices/{k}/scribbles")
    def submit_scribbles(sid: str, k: int, body: dict):
        sess = _get(sid)
        with sess.lock:
            if sess.state != "active":
                raise HTTPException(409, "session finished")
            if sess.pending is None or sess.pending["slice"] != k:
                raise HTTPException(409, f"slice {k} is not the current fetched slice")
            scribbles = ScribbleSet.from_json(body)
            if not scribbles.strokes:
                # viewed but unedited; drives early termination
                payload = encode_bundle({"mask": sess.mask[k].astype(np.uint8)},
                                        {"slice": k, "edited": False})
                return Response(payload, media_type=BUNDLE_CONTENT_TYPE)
            try:
                refined = refine_slice(sess.stack.data[k], sess.fused.mean_map[k],
                                       sess.mask[k], scribbles, sess.cfg)
            except ValueError as exc:
                raise HTTPException(400, str(exc))
            except RuntimeError as exc:
                raise HTTPException(500, f"solver failure: {exc}")
            sess.mask[k] = refined
            sess.pending["edited"] = True
            sess.pending["rounds"].append(scribbles.to_json())
            store._persist(sess)
            payload = encode_bundle({"mask": refined.astype(np.uint8)},
                                    {"slice": k, "edited": True})
        return Response(payload, media_type=BUNDLE_CONTENT_TYPE)

    @app.post("/sessions/{sid}/advance")
    def advance(sid: str):
        sess = _get(sid)
        with sess.lock:
            if sess.state != "active":
                return {"next": None, "done": True}
            _commit_pending(sess)
            hist = [(s, e) for s, e in sess.history]
            k = next_slice(sess.queue, hist, sess.cfg.early_stop_count)
            if k is None:
                sess.state = "finished"
                store._persist(sess)
                return {"next": None, "done": True}
            sess.pending = {"slice": int(k), "score": dict(sess.queue.entries)[k],
                            "edited": False, "rounds": []}
            store._persist(sess)
            return {"next": int(k), "score": sess.pending["score"], "done": False}

    @app.get("/sessions/{sid}/export")
    def export_result(sid: str):
        sess = _get(sid)
        with sess.lock:
            payload = encode_bundle({"mask": sess.mask.astype(np.uint8)},
                                    {"log": sess.log.to_json(), "state": sess.state})
        return Response(payload, media_type=BUNDLE_CONTENT_TYPE)

    return app
