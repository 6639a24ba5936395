"""Metric suite and evaluation protocols.

Metrics: classifier-feature MSE, Frechet distance between Gaussian fits of
classifier features, and pitch accuracy from the pitch classifier.  The three
protocols (reconstruction, synthesis, interpolation) run the full stack over a
manifest split, refined or not, deterministically under a seed.  Absolute
published numbers are not desk-scale targets; the protocols exist to check
trend orderings between the initial and refined paths.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import models
from .config import RunConfig
from .data import MelDataset
from .hypernet import refine
from .stack import SynthStack


class EvalError(ValueError):
    pass


@dataclass
class FeatureStats:
    """Gaussian fit (mean, covariance) over classifier penultimate features."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma))):
            raise EvalError("non-finite feature statistics")


def feature_stats(features: np.ndarray) -> FeatureStats:
    """Fit mu/Sigma; covariance is symmetrized and regularized when the
    sample count is below dim+1."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] < 2:
        raise EvalError("need a (n>=2, dim) feature matrix")
    n, dim = feats.shape
    mu = feats.mean(axis=0)
    sigma = np.cov(feats, rowvar=False)
    sigma = np.atleast_2d(sigma)
    sigma = (sigma + sigma.T) / 2.0
    if n < dim + 1:
        sigma = sigma + 1e-6 * np.eye(dim)
    return FeatureStats(mu=mu, sigma=sigma, n=n)


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(real: FeatureStats, gen: FeatureStats) -> float:
    """Frechet distance |mu1-mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}).

    The cross term is computed as tr sqrt(A S2 A) with A = sqrt(S1), via
    symmetric eigendecomposition; eigenvalues in [-1e-6, 0) are clipped and
    anything more negative raises.
    """
    diff = real.mu - gen.mu
    a = _sqrtm_psd(real.sigma)
    inner = a @ gen.sigma @ a
    inner = (inner + inner.T) / 2.0
    vals = np.linalg.eigvalsh(inner)
    scale = max(1.0, float(np.abs(vals).max()))
    if float(vals.min()) < -1e-6 * scale:
        raise EvalError(f"cross-covariance not PSD (min eigenvalue {vals.min():.3e})")
    tr_sqrt = float(np.sqrt(np.clip(vals, 0.0, None)).sum())
    value = float(diff @ diff + np.trace(real.sigma) + np.trace(gen.sigma) - 2.0 * tr_sqrt)
    if not np.isfinite(value):
        raise EvalError("non-finite Frechet distance")
    return value


def _classifier_features(clf: models.MelClassifier, mels: np.ndarray, batch: int = 64) -> np.ndarray:
    out = []
    with torch.no_grad():
        for start in range(0, len(mels), batch):
            out.append(clf(torch.from_numpy(mels[start : start + batch])).feature.numpy())
    return np.concatenate(out)


def feature_mse(real_mels: np.ndarray, gen_mels: np.ndarray, clf: models.MelClassifier) -> float:
    """Mean over pairs of |feat(real) - feat(gen)|^2 / feat_dim."""
    if len(real_mels) == 0:
        raise EvalError("empty pair list")
    if len(real_mels) != len(gen_mels):
        raise EvalError("pair lists differ in length")
    fr = _classifier_features(clf, np.asarray(real_mels))
    fg = _classifier_features(clf, np.asarray(gen_mels))
    return float(np.mean(np.sum((fr - fg) ** 2, axis=1) / fr.shape[1]))


def pitch_accuracy(mels: np.ndarray, target_pitch_idx: np.ndarray, clf: models.MelClassifier) -> float:
    """Fraction of grids whose argmax predicted pitch matches the target."""
    if len(mels) == 0:
        raise EvalError("empty sample list")
    with torch.no_grad():
        pred = []
        for start in range(0, len(mels), 64):
            pred.append(clf(torch.from_numpy(np.asarray(mels[start : start + 64]))).logits.argmax(1).numpy())
    pred = np.concatenate(pred)
    return float((pred == np.asarray(target_pitch_idx)).mean())


@dataclass
class EvalReport:
    task: str
    mse: float | None
    fid: float | None
    pitch_accuracy: float
    n: int
    config_hash: str
    refined: bool = True
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.pitch_accuracy <= 1.0):
            raise EvalError(f"pitch accuracy {self.pitch_accuracy} outside [0,1]")
        for name, v in (("mse", self.mse), ("fid", self.fid)):
            if v is not None and v < 0:
                raise EvalError(f"{name} must be non-negative, got {v}")

    def as_dict(self) -> dict:
        return {"task": self.task, "mse": self.mse, "fid": self.fid,
                "pitch_accuracy": self.pitch_accuracy, "n": self.n,
                "config_hash": self.config_hash, "refined": self.refined, **self.extras}


def _generate_split(stack: SynthStack, dataset: MelDataset, pitch_idx: np.ndarray,
                    refined: bool, batch: int = 16, features: np.ndarray | None = None) -> np.ndarray:
    """Generate one grid per clip (or per provided feature row) at the given
    pitch indices; refined=False returns the initial reconstructions."""
    stack.require("extractor", "generator")
    if refined:
        stack.require("hypernet")
    outs = []
    with torch.no_grad():
        for start in range(0, len(pitch_idx), batch):
            p = torch.from_numpy(pitch_idx[start : start + batch])
            if features is not None:
                h = torch.from_numpy(features[start : start + batch])
                x = None
            else:
                x = torch.from_numpy(dataset.mels[start : start + batch])
                h = stack.extractor(x)
            if refined:
                res = refine(stack.extractor, stack.generator, stack.hypernet, p, x=x, h=h)
                outs.append(res.x_fine.numpy())
            else:
                z = torch.zeros(h.shape[0], stack.generator.z_dim)
                outs.append(stack.generator(h, z, p).numpy())
    return np.concatenate(outs)


def eval_reconstruction(stack: SynthStack, dataset: MelDataset, refined: bool = True) -> EvalReport:
    """Reconstruct every clip at its own pitch; feature MSE + pitch accuracy."""
    stack.require("inst_classifier", "pitch_classifier")
    gen = _generate_split(stack, dataset, dataset.pitch_idx, refined)
    return EvalReport(
        task="reconstruction",
        mse=feature_mse(dataset.mels, gen, stack.inst_classifier),
        fid=None,
        pitch_accuracy=pitch_accuracy(gen, dataset.pitch_idx, stack.pitch_classifier),
        n=len(dataset),
        config_hash=stack.cfg.config_hash(),
        refined=refined,
    )


def _manifest_pitch_pool(dataset: MelDataset) -> np.ndarray:
    return np.unique(np.array([e.pitch_index for e in dataset.manifest.entries], dtype=np.int64))


def eval_synthesis(stack: SynthStack, dataset: MelDataset, seed: int = 0, refined: bool = True) -> EvalReport:
    """Re-pitch every clip to a uniformly sampled manifest pitch; FID of the
    generated feature distribution against the real one, plus pitch accuracy."""
    stack.require("inst_classifier", "pitch_classifier")
    pool = _manifest_pitch_pool(dataset)
    rng = np.random.default_rng((seed, 0x51))
    target = pool[rng.integers(0, len(pool), size=len(dataset))]
    gen = _generate_split(stack, dataset, target, refined)
    real_stats = feature_stats(_classifier_features(stack.inst_classifier, dataset.mels))
    gen_stats = feature_stats(_classifier_features(stack.inst_classifier, gen))
    return EvalReport(
        task="synthesis",
        mse=None,
        fid=fid(real_stats, gen_stats),
        pitch_accuracy=pitch_accuracy(gen, target, stack.pitch_classifier),
        n=len(dataset),
        config_hash=stack.cfg.config_hash(),
        refined=refined,
    )


def eval_interpolation(stack: SynthStack, dataset: MelDataset, seed: int = 0, refined: bool = True) -> EvalReport:
    """Mix random clip pairs on the 2-simplex, condition on random pitches,
    and score the mixes like the synthesis protocol."""
    from .synthapi import interpolate_features  # local import to avoid a cycle

    stack.require("inst_classifier", "pitch_classifier")
    rng = np.random.default_rng((seed, 0x1F))
    n = len(dataset)
    partner = rng.integers(0, n, size=n)
    alpha = rng.uniform(0.0, 1.0, size=n)
    pool = _manifest_pitch_pool(dataset)
    target = pool[rng.integers(0, len(pool), size=n)]

    with torch.no_grad():
        h_all = stack.extractor(torch.from_numpy(dataset.mels)).numpy()
    mixed = np.stack([
        interpolate_features([h_all[i], h_all[partner[i]]], [alpha[i], 1.0 - alpha[i]])
        for i in range(n)
    ])
    gen = _generate_split(stack, dataset, target, refined, features=mixed)
    real_stats = feature_stats(_classifier_features(stack.inst_classifier, dataset.mels))
    gen_stats = feature_stats(_classifier_features(stack.inst_classifier, gen))
    return EvalReport(
        task="interpolation",
        mse=None,
        fid=fid(real_stats, gen_stats),
        pitch_accuracy=pitch_accuracy(gen, target, stack.pitch_classifier),
        n=n,
        config_hash=stack.cfg.config_hash(),
        refined=refined,
    )


def pixel_l2_report(stack: SynthStack, dataset: MelDataset) -> dict:
    """Held-out mean squared-L2 between inputs and both generation paths;
    the pre-training refinement-gain check reads these."""
    stack.require("extractor", "generator", "hypernet")
    init = _generate_split(stack, dataset, dataset.pitch_idx, refined=False)
    fine = _generate_split(stack, dataset, dataset.pitch_idx, refined=True)
    x = dataset.mels
    l2_init = float(np.mean(np.sum((x - init).reshape(len(x), -1) ** 2, axis=1)))
    l2_fine = float(np.mean(np.sum((x - fine).reshape(len(x), -1) ** 2, axis=1)))
    return {"l2_init": l2_init, "l2_fine": l2_fine, "n": len(x),
            "ratio": l2_fine / l2_init if l2_init > 0 else float("inf")}


def efficiency_report(stack: SynthStack, cfg: RunConfig, n_timing: int | None = None) -> dict:
    """Trainable-parameter counts per component and single-sample mel
    generation latency (median over >= 20 runs on one CPU thread), with and
    without the refinement pass."""
    stack.require("extractor", "generator", "hypernet")
    counts = {}
    for name in ("extractor", "generator", "hypernet", "discriminator",
                 "inst_classifier", "pitch_classifier"):
        mod = getattr(stack, name)
        if mod is not None:
            counts[name] = models.count_params(mod)
    counts["total"] = sum(counts.values())

    n_timing = max(20, n_timing or cfg.get("eval.latency_samples"))
    rng = np.random.default_rng(0)
    h = torch.from_numpy(models.normalize_features(
        torch.from_numpy(rng.standard_normal((1, stack.generator.feat_dim)).astype(np.float32))).numpy())
    p = torch.tensor([60 - 21])
    z = torch.zeros(1, stack.generator.z_dim)

    prev_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        init_times, fine_times = [], []
        with torch.no_grad():
            for _ in range(n_timing):
                t0 = time.perf_counter()
                x_init = stack.generator(h, z, p)
                init_times.append(time.perf_counter() - t0)
                t0 = time.perf_counter()
                x_init2 = stack.generator(h, z, p)
                h_init = stack.extractor(x_init2)
                delta = stack.hypernet(h, h_init, x=x_init2, x_init=x_init2)
                stack.generator(h, z, p, offsets=delta.offsets)
                fine_times.append(time.perf_counter() - t0)
    finally:
        torch.set_num_threads(prev_threads)

    lat_init = statistics.median(init_times)
    lat_fine = statistics.median(fine_times)
    return {
        "param_counts": counts,
        "latency_init_s": lat_init,
        "latency_fine_s": lat_fine,
        "refinement_overhead_s": lat_fine - lat_init,
        "timing_runs": n_timing,
        "config_hash": cfg.config_hash(),
    }
