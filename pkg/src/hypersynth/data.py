"""Dataset ingestion and the synthetic toy-instrument corpus.

The toy generator writes short additive-synthesis notes (per-timbre harmonic
decay profiles, ADSR envelopes, seeded jitter) so the whole pipeline trains
end to end on CPU.  Manifests are JSON-lines: one header record carrying the
dataset-wide normalization constants, then one record per note.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import MIDI_MAX, MIDI_MIN, MelConfig
from . import dsp


class DataError(ValueError):
    pass


MANIFEST_NAME = "manifest.jsonl"
_CACHE_MAGIC = b"HSMC"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    audio_path: str
    pitch: int  # MIDI 21..108
    family: int
    split: str  # train | valid

    @property
    def pitch_index(self) -> int:
        return self.pitch - MIDI_MIN


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    families: list[str]
    norm_min_db: float
    norm_max_db: float
    root: str = "."

    def __post_init__(self):
        for e in self.entries:
            if not (MIDI_MIN <= e.pitch <= MIDI_MAX):
                raise DataError(f"pitch {e.pitch} outside [{MIDI_MIN},{MIDI_MAX}]")
        if len(self.families) < 2:
            raise DataError("need at least 2 instrument families")
        train = {e.clip_id for e in self.entries if e.split == "train"}
        valid = {e.clip_id for e in self.entries if e.split == "valid"}
        if train & valid:
            raise DataError("train/valid splits overlap")

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def resolve(self, e: ManifestEntry) -> Path:
        p = Path(e.audio_path)
        return p if p.is_absolute() else Path(self.root) / p

    def save(self, path: str | Path) -> None:
        lines = [
            json.dumps(
                {
                    "kind": "header",
                    "version": 1,
                    "families": self.families,
                    "norm_min_db": self.norm_min_db,
                    "norm_max_db": self.norm_max_db,
                },
                sort_keys=True,
            )
        ]
        for e in self.entries:
            lines.append(
                json.dumps(
                    {
                        "clip_id": e.clip_id,
                        "audio_path": e.audio_path,
                        "pitch": e.pitch,
                        "family": e.family,
                        "split": e.split,
                    },
                    sort_keys=True,
                )
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines:
            raise DataError(f"empty manifest {path}")
        header = json.loads(lines[0])
        if header.get("kind") != "header":
            raise DataError("manifest missing header record")
        entries = []
        for ln in lines[1:]:
            rec = json.loads(ln)
            entries.append(
                ManifestEntry(rec["clip_id"], rec["audio_path"], rec["pitch"], rec["family"], rec["split"])
            )
        return cls(
            entries=entries,
            families=header["families"],
            norm_min_db=header["norm_min_db"],
            norm_max_db=header["norm_max_db"],
            root=str(path.parent),
        )

    def mel_config(self, base: MelConfig) -> MelConfig:
        return base.with_norm(self.norm_min_db, self.norm_max_db)


# --- toy instrument corpus ---------------------------------------------------

# (decay exponent, even-harmonic scale, harmonic cap, noise scale,
#  attack s, decay s, sustain level, release s)
_TOY_PROFILES = [
    (0.4, 1.0, 24, 0.5, 0.004, 0.05, 0.75, 0.04),   # bright saw-ish
    (2.0, 1.0, 24, 0.3, 0.020, 0.08, 0.85, 0.06),   # dark, mellow
    (1.0, 0.08, 24, 0.4, 0.010, 0.06, 0.80, 0.05),  # odd-dominant reed
    (0.7, 1.0, 3, 0.2, 0.030, 0.10, 0.90, 0.07),    # near-pure flute
    (0.25, 0.6, 24, 0.6, 0.002, 0.03, 0.60, 0.03),  # very bright pluck
    (1.5, 0.5, 24, 0.3, 0.015, 0.07, 0.70, 0.05),
    (1.0, 1.0, 16, 3.0, 0.008, 0.05, 0.75, 0.04),   # breathy
    (0.6, 0.15, 12, 0.8, 0.005, 0.04, 0.65, 0.04),
]


def _toy_profile(i: int) -> tuple:
    if i < len(_TOY_PROFILES):
        return _TOY_PROFILES[i]
    # Past the presets, spread decay/evenness procedurally.
    decay = 0.3 + 0.22 * (i % 9)
    even = [1.0, 0.4, 0.1][i % 3]
    return (decay, even, 20, 0.4, 0.005 + 0.003 * (i % 7), 0.06, 0.75, 0.05)


@dataclass
class ToySpec:
    n_timbres: int = 8
    pitches: list[int] = field(default_factory=lambda: list(range(48, 60)))
    samples_per_timbre_pitch: int = 16
    noise_level: float = 0.003
    valid_every: int = 8
    rng_seed: int = 1234

    def __post_init__(self):
        if self.n_timbres < 2:
            raise DataError("toy dataset needs at least 2 timbres")
        for p in self.pitches:
            if not (MIDI_MIN <= p <= MIDI_MAX):
                raise DataError(f"toy pitch {p} outside [{MIDI_MIN},{MIDI_MAX}]")
        profiles = self.harmonic_profiles()
        for a in range(self.n_timbres):
            for b in range(a + 1, self.n_timbres):
                if np.linalg.norm(profiles[a] - profiles[b]) <= 0:
                    raise DataError(f"timbres {a} and {b} are indistinguishable")

    def harmonic_profiles(self) -> np.ndarray:
        """Normalized harmonic amplitude vectors, one row per timbre."""
        out = np.zeros((self.n_timbres, 24))
        for i in range(self.n_timbres):
            decay, even, cap, *_ = _toy_profile(i)
            k = np.arange(1, 25, dtype=np.float64)
            amp = k**-decay
            amp[1::2] *= even  # even harmonics are k=2,4,..: indices 1,3,..
            amp[int(cap):] = 0.0
            out[i] = amp / np.linalg.norm(amp)
        return out

    @classmethod
    def from_config_tree(cls, toy: dict) -> "ToySpec":
        return cls(
            n_timbres=int(toy["n_timbres"]),
            pitches=[int(p) for p in toy["pitches"]],
            samples_per_timbre_pitch=int(toy["samples_per_timbre_pitch"]),
            noise_level=float(toy["noise_level"]),
            valid_every=int(toy["valid_every"]),
            rng_seed=int(toy["rng_seed"]),
        )


def _adsr(n: int, sr: int, attack: float, decay: float, sustain: float, release: float) -> np.ndarray:
    t = np.arange(n) / sr
    total = n / sr
    env = np.ones(n)
    a_end, d_end, r_start = attack, attack + decay, total - release
    env = np.where(t < a_end, t / max(attack, 1e-4), env)
    in_decay = (t >= a_end) & (t < d_end)
    env = np.where(in_decay, 1.0 + (sustain - 1.0) * (t - a_end) / max(decay, 1e-4), env)
    env = np.where((t >= d_end) & (t < r_start), sustain, env)
    env = np.where(t >= r_start, sustain * np.clip((total - t) / max(release, 1e-4), 0.0, 1.0), env)
    return env


def _render_toy_note(timbre: int, midi: int, c: MelConfig, rng: np.random.Generator, noise_level: float) -> np.ndarray:
    decay, even, cap, noise_scale, attack, dec, sus, rel = _toy_profile(timbre)
    n = c.num_samples
    f0 = dsp.midi_to_hz(midi) * 2.0 ** (rng.uniform(-8, 8) / 1200.0)  # +-8 cents detune
    t = np.arange(n, dtype=np.float64) / c.sample_rate
    nyq = c.sample_rate / 2.0
    out = np.zeros(n)
    for k in range(1, int(cap) + 1):
        fk = k * f0
        if fk >= nyq * 0.95:
            break
        amp = k**-decay * (even if k % 2 == 0 else 1.0)
        amp *= 1.0 + rng.uniform(-0.1, 0.1)
        out += amp * np.sin(2.0 * np.pi * fk * t + rng.uniform(0, 2 * np.pi))
    out += noise_level * noise_scale * rng.standard_normal(n)
    out *= _adsr(n, c.sample_rate, attack, dec, sus, rel)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.9 / peak
    return out


def mel_db_grid(w: dsp.Waveform, c: MelConfig) -> np.ndarray:
    """Pre-normalization log-mel grid in dB (used for dataset constants)."""
    mag = dsp.stft_magnitude(w.samples, c)
    mel_mag = mag @ dsp.mel_filterbank(c).T
    db = 20.0 * np.log10(np.maximum(mel_mag, c.amp_floor))
    return np.maximum(db, c.log_floor_db).T


def synth_toy_dataset(spec: ToySpec, out: str | Path, mel_config: MelConfig) -> DatasetManifest:
    """Write WAV notes + manifest; bit-stable under a fixed seed."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    audio_dir = out / "audio"
    audio_dir.mkdir(exist_ok=True)

    rng = np.random.default_rng(spec.rng_seed)
    entries = []
    db_min, db_max = np.inf, -np.inf
    for timbre in range(spec.n_timbres):
        for midi in spec.pitches:
            for variant in range(spec.samples_per_timbre_pitch):
                samples = _render_toy_note(timbre, midi, mel_config, rng, spec.noise_level)
                clip_id = f"t{timbre:02d}_p{midi:03d}_v{variant:03d}"
                rel = f"audio/{clip_id}.wav"
                dsp.save_wav(audio_dir / f"{clip_id}.wav", dsp.Waveform(samples.astype(np.float32), mel_config.sample_rate))
                split = "valid" if variant % spec.valid_every == 0 else "train"
                entries.append(ManifestEntry(clip_id, rel, midi, timbre, split))
                if split == "train":
                    w = dsp.load_waveform(audio_dir / f"{clip_id}.wav", mel_config)
                    grid = mel_db_grid(w, mel_config)
                    db_min = min(db_min, float(grid.min()))
                    db_max = max(db_max, float(grid.max()))

    manifest = DatasetManifest(
        entries=entries,
        families=[f"toy_{i:02d}" for i in range(spec.n_timbres)],
        norm_min_db=db_min,
        norm_max_db=db_max + 1e-6,
        root=str(out),
    )
    manifest.save(out / MANIFEST_NAME)
    return manifest


# --- NSynth-style ingestion ---------------------------------------------------

_NORM_SCAN_CAP = 2048  # train clips scanned for normalization constants


def _read_examples_json(folder: Path) -> dict:
    meta = folder / "examples.json"
    if not meta.exists():
        raise DataError(f"missing metadata listing {meta}")
    return json.loads(meta.read_text())


def ingest_nsynth(root: str | Path, pitch_range: tuple[int, int] = (MIDI_MIN, MIDI_MAX),
                  mel_config: MelConfig | None = None) -> DatasetManifest:
    """Build a manifest from an NSynth-format folder.

    Accepts either a single folder with examples.json + audio/, or a folder of
    split subfolders (names containing 'train'/'valid').  Entries outside
    pitch_range are dropped; normalization constants come from the train split.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"not a directory: {root}")
    lo, hi = max(pitch_range[0], MIDI_MIN), min(pitch_range[1], MIDI_MAX)

    split_dirs: list[tuple[str, Path]] = []
    if (root / "examples.json").exists():
        split_dirs.append(("", root))
    else:
        for child in sorted(root.iterdir()):
            if child.is_dir() and (child / "examples.json").exists():
                name = child.name.lower()
                split = "valid" if "valid" in name else "train"
                split_dirs.append((split, child))
    if not split_dirs:
        raise DataError(f"empty dataset: no examples.json under {root}")

    raw: list[tuple[str, str, int, str, str]] = []  # clip_id, rel_path, pitch, family_name, split
    for forced_split, folder in split_dirs:
        meta = _read_examples_json(folder)
        for note_id in sorted(meta):
            rec = meta[note_id]
            pitch = int(rec["pitch"])
            if not (lo <= pitch <= hi):
                continue
            fam = str(rec.get("instrument_family_str", rec.get("instrument_family", "unknown")))
            wav = folder / "audio" / f"{note_id}.wav"
            if not wav.exists():
                raise DataError(f"listed audio missing: {wav}")
            split = forced_split or str(rec.get("split", ""))
            raw.append((note_id, str(wav.relative_to(root)), pitch, fam, split))

    if not raw:
        raise DataError("empty dataset: nothing within pitch range")

    # Deterministic split assignment where none was given.
    for i, (cid, rel, pitch, fam, split) in enumerate(raw):
        if split not in ("train", "valid"):
            raw[i] = (cid, rel, pitch, fam, "valid" if i % 8 == 0 else "train")

    families = sorted({fam for _, _, _, fam, _ in raw})
    fam_id = {f: i for i, f in enumerate(families)}
    entries = [ManifestEntry(cid, rel, pitch, fam_id[fam], split) for cid, rel, pitch, fam, split in raw]

    mc = mel_config or MelConfig()
    db_min, db_max = np.inf, -np.inf
    train_entries = [e for e in entries if e.split == "train"][:_NORM_SCAN_CAP]
    for e in train_entries:
        w = dsp.load_waveform(root / e.audio_path, mc)
        grid = mel_db_grid(w, mc)
        db_min = min(db_min, float(grid.min()))
        db_max = max(db_max, float(grid.max()))
    if not np.isfinite(db_min):
        raise DataError("empty dataset: no train entries")

    manifest = DatasetManifest(entries, families, db_min, db_max + 1e-6, root=str(root))
    manifest.save(root / MANIFEST_NAME)
    return manifest


# --- mel cache + in-memory dataset ---------------------------------------------


def _mel_config_hash(c: MelConfig) -> str:
    blob = json.dumps(c.as_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _audio_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def write_cache_entry(path: Path, arr: np.ndarray) -> None:
    """Atomic (write-temp-rename) binary grid: magic, version, shape, dtype."""
    arr = np.ascontiguousarray(arr)
    header = {"shape": list(arr.shape), "dtype": str(arr.dtype)}
    blob = json.dumps(header, sort_keys=True).encode()
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as f:
        f.write(_CACHE_MAGIC)
        f.write(_CACHE_VERSION.to_bytes(4, "little"))
        f.write(len(blob).to_bytes(4, "little"))
        f.write(blob)
        f.write(arr.tobytes())
    os.replace(tmp, path)


def read_cache_entry(path: Path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != _CACHE_MAGIC:
            raise DataError(f"bad cache magic in {path}")
        version = int.from_bytes(f.read(4), "little")
        if version != _CACHE_VERSION:
            raise DataError(f"unsupported cache version {version}")
        hlen = int.from_bytes(f.read(4), "little")
        header = json.loads(f.read(hlen))
        data = np.frombuffer(f.read(), dtype=np.dtype(header["dtype"]))
    return data.reshape(header["shape"]).copy()


class MelDataset:
    """Manifest split materialized in memory, with an on-disk mel cache."""

    def __init__(self, manifest: DatasetManifest, mel_config: MelConfig, split: str = "train",
                 cache_dir: str | Path | None = None, keep_waveforms: bool = False):
        entries = manifest.split(split)
        if not entries:
            raise DataError(f"manifest has no '{split}' entries")
        self.manifest = manifest
        self.mel_config = mel_config
        self.split = split
        self.entries = entries
        self.families = manifest.families
        cache = Path(cache_dir) if cache_dir else Path(manifest.root) / "mel_cache"
        cache.mkdir(parents=True, exist_ok=True)
        cfg_hash = _mel_config_hash(mel_config)

        mels, waves = [], []
        for e in entries:
            wav_path = manifest.resolve(e)
            key = cache / f"{_audio_hash(wav_path)}_{cfg_hash}.mel"
            if key.exists():
                grid = read_cache_entry(key)
            else:
                w = dsp.load_waveform(wav_path, mel_config)
                grid = dsp.mel_spectrogram(w, mel_config).values
                write_cache_entry(key, grid)
            mels.append(grid)
            if keep_waveforms:
                waves.append(dsp.load_waveform(wav_path, mel_config).samples)
        self.mels = np.stack(mels)  # (N, mel_bins, frames)
        self.waveforms = np.stack(waves) if keep_waveforms else None
        self.pitches = np.array([e.pitch for e in entries], dtype=np.int64)
        self.pitch_idx = np.array([e.pitch_index for e in entries], dtype=np.int64)
        self.family = np.array([e.family for e in entries], dtype=np.int64)
        self.clip_ids = [e.clip_id for e in entries]

    def __len__(self) -> int:
        return len(self.entries)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches for one epoch; final batch may be partial."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def batch_iterator(dataset: MelDataset, batch_size: int, rng: np.random.Generator):
    """Endless stream of (mel, pitch_index, family) batches over shuffled epochs."""
    if len(dataset) == 0:
        raise DataError("empty dataset")
    while True:
        for idx in epoch_batches(len(dataset), batch_size, rng):
            yield dataset.mels[idx], dataset.pitch_idx[idx], dataset.family[idx]
