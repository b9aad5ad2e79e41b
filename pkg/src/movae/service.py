"""HTTP facade over a loaded checkpoint: model info, test-set embeddings,
latent decoding, melody transfer and topology grids for the explorer UI.

All endpoints are pure reads of an immutable checkpoint snapshot; identical
requests return identical bodies. Errors always carry {code, message}.
"""

from __future__ import annotations

import base64
import json
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from .audio import AudioBuffer, audio_from_wav_bytes, resample_linear, wav_bytes
from .checkpoint import ModelCheckpoint, checkpoint_hash, load_checkpoint
from .conditioning import ConditionLabel, NUM_OCTAVES, NUM_PITCH_CLASSES
from .corpus import DatasetSplit
from .evaluation import DESCRIPTOR_NAMES, chunk_descriptor_values, latent_topology, to_linear
from .model import MoveModel, batch_labels
from .spectral import LogMagSpectrogram, invert, mel_filterbank
from .transfer import TransferRequest, transfer_melody

MAX_TRANSFER_SECONDS = 30.0
MIN_RENDER_SECONDS = 0.25


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class SessionState:
    """Immutable checkpoint snapshot plus caches. Swapping the snapshot is a
    single attribute assignment, so requests see old or new, never a mix."""

    model: MoveModel
    stats: object
    spectral_config: object
    instrument_names: list[str]
    content_hash: str
    dataset: DatasetSplit | None = None
    max_grid: int = 21
    _embeddings: list[dict] | None = None
    _topo_cache: OrderedDict = field(default_factory=OrderedDict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def from_checkpoint(
        cls, ckpt: ModelCheckpoint, dataset: DatasetSplit | None = None,
        content_hash: str = "", max_grid: int = 21,
    ) -> "SessionState":
        return cls(
            model=ckpt.build_model(),
            stats=ckpt.stats,
            spectral_config=ckpt.spectral_config,
            instrument_names=list(ckpt.instrument_names),
            content_hash=content_hash or "unsaved",
            dataset=dataset,
            max_grid=max_grid,
        )

    @classmethod
    def from_dir(cls, ckpt_dir, dataset: DatasetSplit | None = None, max_grid: int = 21):
        ckpt = load_checkpoint(ckpt_dir)
        return cls.from_checkpoint(
            ckpt, dataset, content_hash=checkpoint_hash(ckpt_dir), max_grid=max_grid
        )

    @property
    def bin_centers(self) -> np.ndarray:
        _, centers = mel_filterbank(self.spectral_config)
        return centers

    def embeddings(self) -> list[dict]:
        if self.dataset is None:
            raise ServiceError(503, "no_dataset", "no dataset attached at serve time")
        with self._lock:
            if self._embeddings is None:
                data, labels, sources = self.dataset.chunks_of(self.dataset.test)
                dtype = next(self.model.parameters()).dtype
                with torch.no_grad():
                    mu, _ = self.model.encode(
                        torch.as_tensor(data, dtype=dtype),
                        batch_labels(labels, self.model.cfg),
                    )
                self._embeddings = [
                    {
                        "z": [float(v) for v in mu[i]],
                        "label": {
                            "pitch_class": labels[i].pitch_class,
                            "octave": labels[i].octave,
                            "instrument": labels[i].instrument,
                        },
                        "note_id": sources[i][0],
                    }
                    for i in range(len(labels))
                ]
            return self._embeddings


class DecodeRequest(BaseModel):
    z: list[float]
    pitch_class: int
    octave: int
    instrument: int
    render_audio: bool = False
    gl_iters: int = 30


class EmbedRequest(BaseModel):
    instrument: int | str | None = None


class TransferBody(BaseModel):
    wav_base64: str | None = None
    note_id: str | None = None
    source_instrument: int
    target_instrument: int
    pitch_class: int | None = None
    octave: int | None = None
    gl_iters: int = 40
    overlap: int = 4


def _label_or_400(state: SessionState, pc: int, octave: int, instrument: int) -> ConditionLabel:
    if not 0 <= instrument < len(state.instrument_names):
        raise ServiceError(400, "bad_condition", f"unknown instrument {instrument}")
    try:
        return ConditionLabel(pc, octave, instrument)
    except Exception as exc:
        raise ServiceError(400, "bad_condition", str(exc)) from exc


def _resolve_instrument(state: SessionState, value) -> int:
    if isinstance(value, str):
        if value not in state.instrument_names:
            raise ServiceError(400, "unknown_instrument", f"unknown instrument {value!r}")
        return state.instrument_names.index(value)
    if not 0 <= int(value) < len(state.instrument_names):
        raise ServiceError(400, "unknown_instrument", f"unknown instrument {value}")
    return int(value)


def _decode_chunk(state: SessionState, z: np.ndarray, label: ConditionLabel) -> np.ndarray:
    dtype = next(state.model.parameters()).dtype
    with torch.no_grad():
        mu_x, _ = state.model.decode(
            torch.as_tensor(z[None], dtype=dtype), batch_labels([label], state.model.cfg)
        )
        return torch.tanh(mu_x)[0].numpy()


def _render_chunk_audio(state: SessionState, log_frames: np.ndarray, gl_iters: int) -> bytes:
    scfg = state.spectral_config
    min_frames = math.ceil(
        (MIN_RENDER_SECONDS * scfg.sample_rate - scfg.n_fft) / scfg.hop + 1
    )
    reps = max(1, math.ceil(min_frames / log_frames.shape[0]))
    tiled = np.tile(log_frames, (reps, 1))
    spec = LogMagSpectrogram(tiled, state.bin_centers, scfg.hop, scfg.floor, scfg)
    return wav_bytes(invert(spec, gl_iters))


def create_app(state: SessionState | None = None) -> FastAPI:
    app = FastAPI(title="movae service")
    app.state.session = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(ServiceError)
    async def service_error_handler(_req: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    def session() -> SessionState:
        s = app.state.session
        if s is None:
            raise ServiceError(503, "no_checkpoint", "no checkpoint loaded")
        return s

    @app.get("/model/info")
    def model_info():
        s = session()
        cfg = s.model.cfg
        return {
            "variant": cfg.variant,
            "latent_dim": cfg.latent_dim,
            "instruments": list(s.instrument_names),
            "pitch_classes": NUM_PITCH_CLASSES,
            "octaves": NUM_OCTAVES,
            "n_bins": cfg.n_bins,
            "t_chunk": cfg.t_chunk,
        }

    @app.post("/embed-testset")
    def embed_testset(body: EmbedRequest):
        s = session()
        points = s.embeddings()
        if body.instrument is not None:
            inst = _resolve_instrument(s, body.instrument)
            points = [p for p in points if p["label"]["instrument"] == inst]
        return points

    @app.post("/decode")
    def decode(body: DecodeRequest):
        s = session()
        cfg = s.model.cfg
        if len(body.z) != cfg.latent_dim or not all(math.isfinite(v) for v in body.z):
            raise ServiceError(
                400, "bad_latent", f"z must be {cfg.latent_dim} finite floats"
            )
        label = _label_or_400(s, body.pitch_class, body.octave, body.instrument)
        chunk_norm = _decode_chunk(s, np.asarray(body.z, dtype=np.float64), label)
        scfg = s.spectral_config
        lin = to_linear(chunk_norm[None], s.stats, scfg.floor)[0]
        values = chunk_descriptor_values(lin[None], s.bin_centers)
        log_frames = np.log(lin)
        payload = {
            "spectrogram": [[float(v) for v in row] for row in log_frames],
            "descriptors": {
                "mean": {k: float(np.mean(values[k])) for k in DESCRIPTOR_NAMES},
                "per_frame": {k: [float(v) for v in values[k]] for k in DESCRIPTOR_NAMES},
            },
        }
        if body.render_audio:
            payload["wav_base64"] = base64.b64encode(
                _render_chunk_audio(s, log_frames, body.gl_iters)
            ).decode("ascii")
        return payload

    @app.post("/transfer")
    def transfer_endpoint(body: TransferBody):
        s = session()
        src = _resolve_instrument(s, body.source_instrument)
        tgt = _resolve_instrument(s, body.target_instrument)
        if body.wav_base64 is not None:
            try:
                audio = audio_from_wav_bytes(base64.b64decode(body.wav_base64))
            except Exception as exc:
                raise ServiceError(400, "bad_audio", f"unreadable WAV payload: {exc}") from exc
        elif body.note_id is not None:
            if s.dataset is None:
                raise ServiceError(503, "no_dataset", "no dataset attached at serve time")
            match = [r for r in s.dataset.test + s.dataset.train if r.note_id == body.note_id]
            if not match:
                raise ServiceError(400, "unknown_note", f"no note {body.note_id!r}")
            audio = match[0].audio
        else:
            raise ServiceError(400, "bad_request", "need wav_base64 or note_id")
        scfg = s.spectral_config
        if audio.sample_rate != scfg.sample_rate:
            audio = resample_linear(audio, scfg.sample_rate)
        if audio.duration_s > MAX_TRANSFER_SECONDS:
            raise ServiceError(
                413, "audio_too_long",
                f"audio of {audio.duration_s:.1f}s exceeds the {MAX_TRANSFER_SECONDS:.0f}s cap",
            )
        req = TransferRequest(src, tgt, body.pitch_class, body.octave)
        try:
            out = transfer_melody(
                s.model, s.stats, scfg, audio, req,
                t_chunk=s.model.cfg.t_chunk, overlap=body.overlap,
                gl_iterations=body.gl_iters,
            )
        except Exception as exc:
            raise ServiceError(400, "transfer_failed", str(exc)) from exc
        from .spectral import analyze, linear_magnitudes

        spec = analyze(out, scfg)
        values = chunk_descriptor_values(linear_magnitudes(spec)[None], s.bin_centers)
        return {
            "wav_base64": base64.b64encode(wav_bytes(out)).decode("ascii"),
            "descriptor_summary": {k: float(np.mean(values[k])) for k in DESCRIPTOR_NAMES},
        }

    @app.get("/topology")
    def topology(instrument: int, pitch: int, octave: int, n: int = 9,
                 lo: float = -3.0, hi: float = 3.0):
        s = session()
        if n > s.max_grid:
            raise ServiceError(400, "grid_too_large", f"n={n} exceeds maximum {s.max_grid}")
        label = _label_or_400(s, pitch, octave, instrument)
        key = (s.content_hash, instrument, pitch, octave, n, lo, hi)
        with s._lock:
            if key in s._topo_cache:
                s._topo_cache.move_to_end(key)
                return Response(content=s._topo_cache[key], media_type="application/json")
        try:
            grid = latent_topology(
                s.model, s.stats, s.bin_centers, s.spectral_config.floor, label,
                lo=lo, hi=hi, n=n,
            )
        except Exception as exc:
            raise ServiceError(400, "bad_grid", str(exc)) from exc
        records = [
            {
                "z": [float(v) for v in grid.points[i]],
                **{name: float(grid.values[name][i]) for name in DESCRIPTOR_NAMES},
            }
            for i in range(len(grid.points))
        ]
        body = json.dumps({"condition": {
            "pitch_class": pitch, "octave": octave, "instrument": instrument},
            "n": n, "lo": lo, "hi": hi, "points": records}).encode()
        with s._lock:
            s._topo_cache[key] = body
            while len(s._topo_cache) > 32:
                s._topo_cache.popitem(last=False)
        return Response(content=body, media_type="application/json")

    return app
