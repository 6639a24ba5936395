"""User-facing synthesis surface: timbre interpolation, the one-shot
synthesis pipeline, and the sound-slot registry backing the HTTP service."""

from __future__ import annotations

import hashlib
import io
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import dsp
from .config import MelConfig, RunConfig
from .hypernet import refine
from .models import PitchLabel
from .stack import SynthStack, merge_bundles


class SynthError(ValueError):
    pass


def interpolate_features(features: list[np.ndarray], alphas: list[float]) -> np.ndarray:
    """Convex mix of timbre features, re-normalized to unit length.

    Terms are accumulated in a canonical order (descending weight, then a
    content digest) in float64, so the result is exactly permutation
    equivariant and alpha=(1,0) reproduces the first feature's mix bitwise.
    """
    if len(features) == 0:
        raise SynthError("empty feature list")
    if len(features) != len(alphas):
        raise SynthError(f"{len(features)} features but {len(alphas)} weights")
    alphas = [float(a) for a in alphas]
    if any(a < 0 for a in alphas):
        raise SynthError("weights must be non-negative")
    if abs(sum(alphas) - 1.0) > 1e-6:
        raise SynthError(f"weights must sum to 1 (got {sum(alphas):.8f})")

    arrs = [np.ascontiguousarray(np.asarray(f, dtype=np.float32)) for f in features]
    dim = arrs[0].shape
    for a in arrs:
        if a.shape != dim:
            raise SynthError("feature dimensions differ")
    order = sorted(range(len(arrs)),
                   key=lambda i: (-alphas[i], hashlib.sha256(arrs[i].tobytes()).hexdigest()))
    acc = np.zeros(dim, dtype=np.float64)
    for i in order:
        acc = acc + alphas[i] * arrs[i].astype(np.float64)
    norm = float(np.sqrt(np.sum(acc * acc)))
    if norm < 1e-8:
        raise SynthError("degenerate interpolation: mixed feature has zero norm")
    return (acc / norm).astype(np.float32)


def stack_mel_config(stack: SynthStack) -> MelConfig:
    """The analysis config pinned to the checkpoint's dataset normalization."""
    mc = stack.cfg.mel
    meta = stack.meta
    if "norm_min_db" in meta and "norm_max_db" in meta:
        mc = mc.with_norm(meta["norm_min_db"], meta["norm_max_db"])
    return mc


@dataclass
class SoundSlot:
    slot_id: str
    name: str
    features: np.ndarray  # cached h
    mel: np.ndarray
    checkpoint_hash: str


class SlotStore:
    """Single-writer slot registry with concurrent readers."""

    def __init__(self, limit: int = 64):
        self._slots: dict[str, SoundSlot] = {}
        self._lock = threading.Lock()
        self._counter = 0
        self._limit = limit

    def add(self, stack: SynthStack, audio_bytes: bytes, name: str) -> SoundSlot:
        stack.require("extractor")
        mc = stack_mel_config(stack)
        wave = dsp.load_waveform(io.BytesIO(audio_bytes), mc)
        mel = dsp.mel_spectrogram(wave, mc).values
        with torch.no_grad():
            h = stack.extractor(torch.from_numpy(mel).unsqueeze(0))[0].numpy()
        with self._lock:
            if len(self._slots) >= self._limit:
                raise SynthError(f"slot limit ({self._limit}) reached")
            self._counter += 1
            slot = SoundSlot(
                slot_id=f"s{self._counter:04d}",
                name=name,
                features=h,
                mel=mel,
                checkpoint_hash=stack.meta.get("bundle_sha", ""),
            )
            self._slots[slot.slot_id] = slot
        return slot

    def get(self, slot_id: str) -> SoundSlot:
        with self._lock:
            if slot_id not in self._slots:
                raise KeyError(slot_id)
            return self._slots[slot_id]

    def list(self) -> list[SoundSlot]:
        with self._lock:
            return list(self._slots.values())


@dataclass
class SynthesisResult:
    mel_init: np.ndarray
    wav_init: dsp.Waveform
    mel_fine: np.ndarray | None = None
    wav_fine: dsp.Waveform | None = None
    h_interp: np.ndarray | None = None

    @property
    def mel(self) -> np.ndarray:
        return self.mel_fine if self.mel_fine is not None else self.mel_init

    @property
    def wav(self) -> dsp.Waveform:
        return self.wav_fine if self.wav_fine is not None else self.wav_init


def synthesize(stack: SynthStack, slots: list[SoundSlot], alphas: list[float],
               pitch: PitchLabel | int, refine_output: bool = True,
               griffin_lim_iters: int | None = None) -> SynthesisResult:
    """Mix slot timbres, condition on the pitch, generate, and render audio.

    refine_output=False walks only the base-generator path and never touches
    the hypernetwork.
    """
    stack.require("extractor", "generator")
    if refine_output:
        stack.require("hypernet")
    if not slots:
        raise SynthError("no sound slots given")
    pitch = pitch if isinstance(pitch, PitchLabel) else PitchLabel(int(pitch))
    h = interpolate_features([s.features for s in slots], alphas)
    mc = stack_mel_config(stack)
    iters = stack.cfg.get("eval.griffin_lim_iters") if griffin_lim_iters is None else griffin_lim_iters

    h_t = torch.from_numpy(h).unsqueeze(0)
    p_t = torch.tensor([pitch.index])
    with torch.no_grad():
        if refine_output:
            res = refine(stack.extractor, stack.generator, stack.hypernet, p_t, h=h_t)
            mel_init = res.x_init[0].numpy()
            mel_fine = res.x_fine[0].numpy()
        else:
            z = torch.zeros(1, stack.generator.z_dim)
            mel_init = stack.generator(h_t, z, p_t)[0].numpy()
            mel_fine = None

    mel_cfg_spec = dsp.MelSpec(mel_init, mc)
    out = SynthesisResult(
        mel_init=mel_init,
        wav_init=dsp.invert_mel(mel_cfg_spec, mc, iters=iters),
        h_interp=h,
    )
    if mel_fine is not None:
        out.mel_fine = mel_fine
        out.wav_fine = dsp.invert_mel(dsp.MelSpec(mel_fine, mc), mc, iters=iters)
    return out


def load_synthesis_stack(cfg: RunConfig, checkpoint: str | Path,
                         classifiers: str | Path | None = None, force: bool = False) -> SynthStack:
    """Load the model bundle (optionally overlaying a classifier bundle) and
    record the bundle digest for cache keying."""
    paths = [p for p in (checkpoint, classifiers) if p is not None]
    stack = merge_bundles(cfg, *paths, force=force)
    sha = hashlib.sha256()
    for p in paths:
        sha.update(Path(p).read_bytes())
    stack.meta["bundle_sha"] = sha.hexdigest()[:16]
    return stack
