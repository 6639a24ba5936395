"""HTTP service exposing the synthesis pipeline to the browser UI.

All responses are JSON except the rendered WAV/PNG payloads, which are served
from a deterministic render cache keyed by (request, checkpoint digest) so
identical requests against the same checkpoint return identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import dsp, reporting
from .config import MIDI_MAX, MIDI_MIN
from .stack import SynthStack
from .synthapi import SlotStore, SynthError, synthesize

MAX_UPLOAD_BYTES = 8 * 1024 * 1024


class SynthesizeRequest(BaseModel):
    slot_ids: list[str] = Field(min_length=1)
    alphas: list[float]
    midi_pitch: int
    refine: bool = True
    checkpoint_hash: str | None = None


def _request_id(stack: SynthStack, slots, req: SynthesizeRequest) -> str:
    payload = {
        "alphas": [round(float(a), 10) for a in req.alphas],
        "midi_pitch": req.midi_pitch,
        "refine": req.refine,
        "slots": [hashlib.sha256(s.features.tobytes()).hexdigest()[:16] for s in slots],
        "bundle": stack.meta.get("bundle_sha", ""),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def create_app(stack: SynthStack | None, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="hypersynth", docs_url=None, redoc_url=None)
    slots = SlotStore()
    renders: dict[str, bytes] = {}
    render_lock = threading.Lock()

    def require_stack() -> SynthStack:
        if stack is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return stack

    @app.get("/health")
    def health():
        if stack is None:
            return JSONResponse({"status": "loading"}, status_code=503)
        return {"status": "ok", "checkpoint": stack.meta.get("bundle_sha", "")}

    @app.get("/config")
    def config():
        st = require_stack()
        return {
            "profile": st.cfg.profile,
            "config_hash": st.cfg.config_hash(),
            "checkpoint": st.meta.get("bundle_sha", ""),
            "pitch_range": [MIDI_MIN, MIDI_MAX],
            "families": st.families,
            "tree": st.cfg.tree,
        }

    def _slot_json(s) -> dict:
        return {
            "slot_id": s.slot_id,
            "name": s.name,
            "feature_preview": [round(float(v), 5) for v in s.features[:8]],
            "mel_png": f"/image/slot_{s.slot_id}.png",
        }

    @app.post("/slots")
    async def upload_slot(file: UploadFile = File(...)):
        st = require_stack()
        payload = await file.read()
        if len(payload) > MAX_UPLOAD_BYTES:
            raise HTTPException(status_code=413, detail=f"upload exceeds {MAX_UPLOAD_BYTES} bytes")
        try:
            slot = slots.add(st, payload, name=file.filename or "upload.wav")
        except (dsp.DspError, SynthError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        with render_lock:
            renders[f"slot_{slot.slot_id}.png"] = reporting.mel_png_bytes(slot.mel)
        return _slot_json(slot)

    @app.get("/slots")
    def list_slots():
        return {"slots": [_slot_json(s) for s in slots.list()]}

    @app.post("/synthesize")
    def synth(req: SynthesizeRequest):
        st = require_stack()
        if req.checkpoint_hash and req.checkpoint_hash != st.meta.get("bundle_sha", ""):
            raise HTTPException(status_code=409, detail="checkpoint changed since the request was built")
        if not (MIDI_MIN <= req.midi_pitch <= MIDI_MAX):
            raise HTTPException(status_code=400, detail=f"pitch must lie in [{MIDI_MIN},{MIDI_MAX}]")
        try:
            chosen = [slots.get(sid) for sid in req.slot_ids]
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown slot {exc.args[0]!r}")
        rid = _request_id(st, chosen, req)
        with render_lock:
            cached = f"{rid}.meta" in renders
        if not cached:
            try:
                result = synthesize(st, chosen, req.alphas, req.midi_pitch, refine_output=req.refine)
            except SynthError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            with render_lock:
                renders[f"{rid}.wav"] = dsp.wav_bytes(result.wav)
                renders[f"{rid}_init.png"] = reporting.mel_png_bytes(result.mel_init)
                if result.mel_fine is not None:
                    renders[f"{rid}_fine.png"] = reporting.mel_png_bytes(result.mel_fine)
                renders[f"{rid}.meta"] = b"1"
        body = {
            "request_id": rid,
            "wav": f"/audio/{rid}.wav",
            "mel_init_png": f"/image/{rid}_init.png",
            "mel_fine_png": f"/image/{rid}_fine.png" if req.refine else None,
            "midi_pitch": req.midi_pitch,
            "refine": req.refine,
            "checkpoint": st.meta.get("bundle_sha", ""),
        }
        return body

    @app.get("/audio/{rid}.wav")
    def audio(rid: str):
        with render_lock:
            payload = renders.get(f"{rid}.wav")
        if payload is None:
            raise HTTPException(status_code=404, detail="no such rendering")
        return Response(content=payload, media_type="audio/wav")

    @app.get("/image/{name}.png")
    def image(name: str):
        with render_lock:
            payload = renders.get(f"{name}.png")
        if payload is None:
            raise HTTPException(status_code=404, detail="no such image")
        return Response(content=payload, media_type="image/png")

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
