"""Instance conditioning: exact cosine KNN over training-clip timbre features,
with label-pitch override sampling used during both training stages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .config import MIDI_MAX, MIDI_MIN
from .data import MelDataset
from .models import FeatureExtractor


class IndexError_(ValueError):
    pass


@dataclass
class FeatureIndex:
    """Immutable KNN index; rows are unit-norm features ordered by clip id."""

    features: np.ndarray  # (N, d) float32, unit rows
    clip_ids: list[str]
    pitches: np.ndarray  # (N,) MIDI
    families: np.ndarray  # (N,)
    k: int
    mels: np.ndarray | None = field(default=None, repr=False)  # (N, bins, frames)

    def __post_init__(self):
        n = self.features.shape[0]
        if n == 0:
            raise IndexError_("empty feature index")
        if not (0 < self.k < n):
            raise IndexError_(f"k={self.k} must be in (0, {n})")
        norms = np.linalg.norm(self.features, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-4):
            raise IndexError_("index rows must be unit-norm")
        if not (np.all(self.pitches >= MIDI_MIN) and np.all(self.pitches <= MIDI_MAX)):
            raise IndexError_("index pitches outside MIDI range")

    def __len__(self) -> int:
        return self.features.shape[0]

    def neighbors(self, h: np.ndarray, k: int | None = None) -> np.ndarray:
        """Row indices of the k nearest neighbors by cosine similarity.

        Rows are ordered by clip id at build time and the sort is stable, so
        ties break by clip id ascending.
        """
        k = self.k if k is None else k
        sims = self.features @ np.asarray(h, dtype=np.float32)
        order = np.argsort(-sims, kind="stable")
        return order[:k]

    def attach_mels(self, mels: np.ndarray) -> None:
        if mels.shape[0] != len(self):
            raise IndexError_(f"{mels.shape[0]} mel grids for {len(self)} index rows")
        self.mels = mels


@dataclass
class NeighborSample:
    x: np.ndarray  # mel grid
    pitch: int  # MIDI
    used_label_pitch: bool
    row: int | None = None  # index row when KNN-sampled

    @property
    def pitch_index(self) -> int:
        return self.pitch - MIDI_MIN


def build_index(dataset: MelDataset, extractor: FeatureExtractor, k: int = 5,
                batch_size: int = 64) -> FeatureIndex:
    """Extract features for every clip in the (train) dataset and index them."""
    if len(dataset) == 0:
        raise IndexError_("empty manifest split")
    order = np.argsort(np.asarray(dataset.clip_ids))
    mels = dataset.mels[order]
    feats = []
    with torch.no_grad():
        for start in range(0, len(order), batch_size):
            chunk = torch.from_numpy(mels[start : start + batch_size])
            feats.append(extractor(chunk).numpy())
    features = np.concatenate(feats).astype(np.float32)
    idx = FeatureIndex(
        features=features,
        clip_ids=[dataset.clip_ids[i] for i in order],
        pitches=dataset.pitches[order].copy(),
        families=dataset.family[order].copy(),
        k=k,
    )
    idx.attach_mels(mels)
    return idx


def sample_neighbor(h: np.ndarray, x: np.ndarray, pitch: int, idx: FeatureIndex,
                    p_recon: float, rng: np.random.Generator) -> NeighborSample:
    """With probability p_recon return the query's own (x, p); otherwise a
    uniform draw from the k nearest neighbors, carrying that clip's pitch."""
    if not (0.0 <= p_recon <= 1.0):
        raise ValueError(f"p_recon={p_recon} outside [0, 1]")
    if rng.uniform() < p_recon:
        return NeighborSample(x=x, pitch=int(pitch), used_label_pitch=True)
    if idx.mels is None:
        raise IndexError_("index has no attached mel grids")
    rows = idx.neighbors(h)
    row = int(rows[rng.integers(0, len(rows))])
    return NeighborSample(x=idx.mels[row], pitch=int(idx.pitches[row]), used_label_pitch=False, row=row)


def index_to_sections(idx: FeatureIndex) -> tuple[dict[str, np.ndarray], dict]:
    arrays = {
        "features": idx.features,
        "pitches": idx.pitches.astype(np.int64),
        "families": idx.families.astype(np.int64),
    }
    meta = {"clip_ids": idx.clip_ids, "k": idx.k}
    return arrays, meta


def index_from_sections(arrays: dict[str, np.ndarray], meta: dict,
                        mels: np.ndarray | None = None) -> FeatureIndex:
    idx = FeatureIndex(
        features=arrays["features"].astype(np.float32),
        clip_ids=list(meta["clip_ids"]),
        pitches=arrays["pitches"].astype(np.int64),
        families=arrays["families"].astype(np.int64),
        k=int(meta["k"]),
    )
    if mels is not None:
        idx.attach_mels(mels)
    return idx
