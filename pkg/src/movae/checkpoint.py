"""Checkpoint container: a directory holding a text manifest plus one binary
file per tensor (header: name length, name, rank, dims as u32 LE; payload
f32 LE row-major). Round trips are bit-exact for float32 training."""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import struct
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .model import ConvSpec, ModelConfig, MoveModel
from .spectral import NormStats, SpectralConfig

CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest"
TORCH_RNG_KEY = "__torch_rng__"


class CheckpointError(Exception):
    pass


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    stats: NormStats
    spectral_config: SpectralConfig
    epoch: int
    instrument_names: list[str]
    seeds: dict = field(default_factory=dict)
    numpy_rng_state: dict | None = None
    torch_rng_state: bytes | None = None
    version: int = CHECKPOINT_VERSION

    def build_model(self, dtype: torch.dtype = torch.float32) -> MoveModel:
        model = MoveModel(self.config, dtype=dtype)
        state = {k: torch.as_tensor(v, dtype=dtype) for k, v in self.tensors.items()}
        model.load_state_dict(state, strict=True)
        model.eval()
        return model


def checkpoint_from_model(
    model: MoveModel,
    stats: NormStats,
    spectral_config: SpectralConfig,
    epoch: int,
    instrument_names: list[str],
    seeds: dict | None = None,
    numpy_rng_state: dict | None = None,
    torch_rng_state: bytes | None = None,
) -> ModelCheckpoint:
    tensors = {
        name: p.detach().numpy().astype("<f4") for name, p in model.state_dict().items()
    }
    return ModelCheckpoint(
        config=model.cfg,
        tensors=tensors,
        stats=stats,
        spectral_config=spectral_config,
        epoch=epoch,
        instrument_names=list(instrument_names),
        seeds=dict(seeds or {}),
        numpy_rng_state=numpy_rng_state,
        torch_rng_state=torch_rng_state,
    )


def _write_tensor(path: Path, name: str, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    name_b = name.encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(name_b)))
        f.write(name_b)
        f.write(struct.pack("<I", arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.tobytes())


def _read_tensor(path: Path) -> tuple[str, np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    try:
        (name_len,) = struct.unpack_from("<I", raw, 0)
        name = raw[4 : 4 + name_len].decode("utf-8")
        off = 4 + name_len
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path.name}: corrupt tensor header ({exc})") from exc
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = raw[off:]
    if len(payload) != 4 * count:
        raise CheckpointError(
            f"tensor {name!r}: truncated payload ({len(payload)} bytes, expected {4 * count})"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return name, arr.copy()


def _stats_to_json(stats: NormStats) -> dict:
    def enc(v):
        a = np.asarray(v)
        return a.tolist() if a.ndim else float(a)

    return {
        "mean": enc(stats.mean),
        "range_min": enc(stats.range_min),
        "range_max": enc(stats.range_max),
        "per_bin": stats.per_bin,
    }


def _stats_from_json(d: dict) -> NormStats:
    def dec(v):
        return np.asarray(v, dtype=np.float64) if isinstance(v, list) else np.float64(v)

    return NormStats(dec(d["mean"]), dec(d["range_min"]), dec(d["range_max"]), d["per_bin"])


def save_checkpoint(ckpt: ModelCheckpoint, directory) -> Path:
    """Write atomically: assemble in a temp directory, then rename."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=directory.name + ".tmp-", dir=directory.parent))
    try:
        tensor_files = []
        for i, name in enumerate(sorted(ckpt.tensors)):
            fname = f"t{i:04d}.bin"
            _write_tensor(tmp / fname, name, ckpt.tensors[name])
            tensor_files.append({"file": fname, "name": name})
        if ckpt.torch_rng_state is not None:
            rng_arr = np.frombuffer(ckpt.torch_rng_state, dtype=np.uint8).astype("<f4")
            _write_tensor(tmp / "rng_torch.bin", TORCH_RNG_KEY, rng_arr)

        mcfg = asdict(ckpt.config)
        manifest = {
            "format_version": ckpt.version,
            "variant": ckpt.config.variant,
            "model_config": mcfg,
            "norm_stats": _stats_to_json(ckpt.stats),
            "spectral_config": asdict(ckpt.spectral_config),
            "epoch": ckpt.epoch,
            "instrument_names": ckpt.instrument_names,
            "seeds": ckpt.seeds,
            "numpy_rng_state": ckpt.numpy_rng_state,
            "tensors": tensor_files,
            "has_torch_rng": ckpt.torch_rng_state is not None,
        }
        with open(tmp / MANIFEST_NAME, "w") as f:
            json.dump(manifest, f, indent=1)
        if directory.exists():
            shutil.rmtree(directory)
        os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def _config_from_json(d: dict) -> ModelConfig:
    d = dict(d)
    d["conv_layers"] = tuple(
        ConvSpec(c["out_channels"], tuple(c["kernel"]), tuple(c["stride"]), tuple(c["padding"]))
        for c in d["conv_layers"]
    )
    for key in ("fc_widths", "head_kernel", "film_trunk"):
        d[key] = tuple(d[key])
    return ModelConfig(**d)


def load_checkpoint(directory) -> ModelCheckpoint:
    directory = Path(directory)
    mpath = directory / MANIFEST_NAME
    if not mpath.exists():
        raise CheckpointError(f"{directory}: no checkpoint manifest found")
    with open(mpath) as f:
        manifest = json.load(f)
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version} (expected {CHECKPOINT_VERSION})"
        )
    tensors = {}
    for entry in manifest["tensors"]:
        name, arr = _read_tensor(directory / entry["file"])
        if name != entry["name"]:
            raise CheckpointError(
                f"tensor file {entry['file']}: header name {name!r} != manifest {entry['name']!r}"
            )
        tensors[name] = arr
    torch_rng = None
    if manifest.get("has_torch_rng"):
        _, rng_arr = _read_tensor(directory / "rng_torch.bin")
        torch_rng = rng_arr.astype(np.uint8).tobytes()
    return ModelCheckpoint(
        config=_config_from_json(manifest["model_config"]),
        tensors=tensors,
        stats=_stats_from_json(manifest["norm_stats"]),
        spectral_config=SpectralConfig(**manifest["spectral_config"]),
        epoch=manifest["epoch"],
        instrument_names=manifest["instrument_names"],
        seeds=manifest.get("seeds", {}),
        numpy_rng_state=manifest.get("numpy_rng_state"),
        torch_rng_state=torch_rng,
        version=version,
    )


def checkpoint_hash(directory) -> str:
    """Content hash over the manifest and all tensor payloads."""
    directory = Path(directory)
    h = hashlib.sha256()
    for path in sorted(directory.iterdir()):
        if path.is_file():
            h.update(path.name.encode())
            h.update(path.read_bytes())
    return h.hexdigest()
