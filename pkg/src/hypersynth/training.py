"""Loss functions and the training schedule.

Stages: `extractor` and `classifiers` (supervised, desk-scale plumbing),
`base` (adversarial training of the conditional generator with instance
conditioning), then the two hypernetwork stages: `pre` (reconstruction
pre-training) and `fine` (joint adversarial fine-tuning of hypernetwork and
discriminator with the generator frozen).

Squared-L2 terms are summed per sample and mean-reduced over the batch.
Every stochastic draw at step t comes from a generator seeded by
(stage seed, t), so interrupted runs resume bit-exactly from a checkpoint.
The noise vector is identically zero in both hypernetwork stages, in
training and inference alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from . import conditioning, dsp
from .config import RunConfig
from .data import DatasetManifest, MelDataset
from .models import (build_classifier, build_discriminator, build_extractor,
                     build_generator, derive_seed, state_to_numpy)
from .runs import RunDir
from .stack import SynthStack, load_stack


class DivergenceError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message if not diagnostics else f"{message} | {diagnostics}")
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class LossWeights:
    """Per-stage loss weights; recon gates to zero off the label-pitch branch."""

    lambda_timbre: float
    lambda_recon: float

    @classmethod
    def pretrain(cls, cfg: RunConfig) -> "LossWeights":
        return cls(cfg.train("lambda_timbre_pre"), cfg.train("lambda_recon_pre"))

    @classmethod
    def finetune(cls, cfg: RunConfig) -> "LossWeights":
        return cls(cfg.train("lambda_timbre_fine"), cfg.train("lambda_recon_fine"))



def _f(value: torch.Tensor | float) -> float:
    return float(value.detach()) if torch.is_tensor(value) else float(value)

def sq_l2(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Per-sample squared L2 distance (summed over all non-batch dims)."""
    return (a - b).flatten(1).pow(2).sum(dim=1)


def pretrain_loss(x: torch.Tensor, x_fine: torch.Tensor, h: torch.Tensor, h_fine: torch.Tensor,
                  used_label_pitch: torch.Tensor, w: LossWeights) -> torch.Tensor:
    """lambda_timbre * |h - h_fine|^2 + gated lambda_recon * |x - x_fine|^2,
    mean-reduced over the batch."""
    if x.shape != x_fine.shape or h.shape != h_fine.shape:
        raise ValueError("pretrain_loss shape mismatch")
    gate = torch.as_tensor(used_label_pitch, dtype=x.dtype).reshape(-1)
    timbre = sq_l2(h, h_fine)
    recon = sq_l2(x.flatten(1), x_fine.flatten(1)) * gate
    return (w.lambda_timbre * timbre + w.lambda_recon * recon).mean()


def pretrain_terms(x, x_fine, h, h_fine, used_label_pitch) -> tuple[float, float]:
    with torch.no_grad():
        gate = torch.as_tensor(used_label_pitch, dtype=x.dtype).reshape(-1)
        timbre = sq_l2(h, h_fine).mean()
        recon = (sq_l2(x.flatten(1), x_fine.flatten(1)) * gate).mean()
    return _f(timbre), _f(recon)


def generator_adv_loss(d_fake_logit: torch.Tensor, pre_loss: torch.Tensor | float) -> torch.Tensor:
    """Non-saturating adversarial term plus the reconstruction objective."""
    return F.softplus(-d_fake_logit).mean() + pre_loss


def discriminator_loss(d_real_logit: torch.Tensor, d_fake_logit: torch.Tensor) -> torch.Tensor:
    return F.softplus(-d_real_logit).mean() + F.softplus(d_fake_logit).mean()


def r1_penalty(disc, x_real: torch.Tensor, pitch_idx: torch.Tensor, h: torch.Tensor,
               gamma: float, create_graph: bool = True) -> torch.Tensor:
    """(gamma/2) * E[|grad_x D(x, p, h)|^2] evaluated at real data."""
    x = x_real.detach().clone().requires_grad_(True)
    logit = disc(x, pitch_idx, h)
    (grad,) = torch.autograd.grad(logit.sum(), x, create_graph=create_graph)
    penalty = 0.5 * gamma * grad.flatten(1).pow(2).sum(dim=1).mean()
    if not torch.isfinite(penalty):
        raise DivergenceError("non-finite R1 gradient", {
            "logit_mean": float(logit.detach().mean()),
            "x_absmax": float(x.detach().abs().max()),
        })
    return penalty


# --- deterministic per-step sampling -------------------------------------------


def step_rng(stage_seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng((stage_seed, step))


def step_batch_indices(n: int, batch_size: int, step: int, stage_seed: int) -> np.ndarray:
    """Full-batch indices for step t under epoch-wise shuffling; a pure
    function of (seed, t) so resumed runs see the same stream."""
    b = min(batch_size, n)
    per_epoch = max(n // b, 1)
    epoch, slot = divmod(step, per_epoch)
    perm = np.random.default_rng((stage_seed, 0x5E9, epoch)).permutation(n)
    return perm[slot * b : slot * b + b]


def _neighbor_batch(h: torch.Tensor, x_np: np.ndarray, pitches_midi: np.ndarray,
                    idx: conditioning.FeatureIndex, p_recon: float, rng: np.random.Generator):
    xs, p_idx, used = [], [], []
    h_np = h.detach().numpy()
    for i in range(x_np.shape[0]):
        s = conditioning.sample_neighbor(h_np[i], x_np[i], int(pitches_midi[i]), idx, p_recon, rng)
        xs.append(s.x)
        p_idx.append(s.pitch_index)
        used.append(s.used_label_pitch)
    return (np.stack(xs), np.array(p_idx, dtype=np.int64), np.array(used, dtype=bool))


# --- optimizer/train-state serialization ----------------------------------------


def _opt_arrays(opt: torch.optim.Optimizer, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    params = [p for g in opt.param_groups for p in g["params"]]
    for i, p in enumerate(params):
        st = opt.state.get(p)
        if not st:
            continue
        step = st["step"]
        out[f"{prefix}.{i}.step"] = np.array([float(step)], dtype=np.float64)
        out[f"{prefix}.{i}.exp_avg"] = st["exp_avg"].detach().numpy().copy()
        out[f"{prefix}.{i}.exp_avg_sq"] = st["exp_avg_sq"].detach().numpy().copy()
    return out


def _load_opt_arrays(opt: torch.optim.Optimizer, arrays: dict[str, np.ndarray], prefix: str) -> None:
    params = [p for g in opt.param_groups for p in g["params"]]
    for i, p in enumerate(params):
        key = f"{prefix}.{i}.exp_avg"
        if key not in arrays:
            continue
        opt.state[p] = {
            "step": torch.tensor(float(arrays[f"{prefix}.{i}.step"][0])),
            "exp_avg": torch.from_numpy(arrays[key].copy()),
            "exp_avg_sq": torch.from_numpy(arrays[f"{prefix}.{i}.exp_avg_sq"].copy()),
        }


def _adam(cfg: RunConfig, params) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=float(cfg.train("lr")),
                            betas=(float(cfg.train("adam_beta1")), float(cfg.train("adam_beta2"))))


def _assert_zero_noise(z: torch.Tensor) -> torch.Tensor:
    # Fixed-z invariant: hypernetwork stages never sample z != 0.
    assert int(torch.count_nonzero(z)) == 0, "noise vector must stay identically zero"
    return z


def _freeze(*modules: nn.Module) -> None:
    for m in modules:
        m.eval()
        m.requires_grad_(False)


def _finite_or_raise(value: torch.Tensor, what: str, extra: dict | None = None) -> None:
    if not torch.isfinite(value):
        raise DivergenceError(f"non-finite {what}", extra or {})


# --- supervised stages ------------------------------------------------------------


def train_feature_extractor(cfg: RunConfig, manifest: DatasetManifest, run: RunDir,
                            seed: int | None = None, iters: int | None = None) -> Path:
    """Family classification on pitch-randomized clips plus an invariance
    penalty between a clip's features and its pitch-shifted twin."""
    if len(manifest.families) < 2:
        raise ValueError("extractor training needs at least 2 instrument families")
    seed = cfg.seed if seed is None else seed
    iters = cfg.train("extractor_iters") if iters is None else iters
    stage_seed = derive_seed(seed, "stage:extractor")
    mel_cfg = manifest.mel_config(cfg.mel)
    train_ds = MelDataset(manifest, mel_cfg, "train", keep_waveforms=True)
    valid_ds = MelDataset(manifest, mel_cfg, "valid")
    batch = cfg.train("extractor_batch")
    shift_max = cfg.train("invariance_shift")
    inv_w = cfg.train("invariance_weight")

    extractor = build_extractor(cfg, len(manifest.families), seed=seed)
    opt = torch.optim.Adam(extractor.parameters(), lr=cfg.train("extractor_lr"))

    for step in range(iters):
        rng = step_rng(stage_seed, step)
        idx = step_batch_indices(len(train_ds), batch, step, stage_seed)
        x = torch.from_numpy(train_ds.mels[idx])
        fam = torch.from_numpy(train_ds.family[idx])
        shifted = []
        for i in idx:
            s = int(rng.integers(-shift_max, shift_max + 1))
            w = dsp.Waveform(train_ds.waveforms[i], mel_cfg.sample_rate)
            shifted.append(dsp.mel_spectrogram(dsp.pitch_shift(w, s), mel_cfg).values)
        x_shift = torch.from_numpy(np.stack(shifted))

        feats = extractor(x)
        feats_shift = extractor(x_shift)
        ce = F.cross_entropy(extractor.family_head(feats_shift), fam)
        invariance = sq_l2(feats, feats_shift).mean()
        loss = ce + inv_w * invariance
        _finite_or_raise(loss, "extractor loss", {"step": step})
        opt.zero_grad()
        loss.backward()
        opt.step()
        run.log_metrics({"stage": "extractor", "step": step, "loss": _f(loss),
                         "ce": _f(ce), "invariance": _f(invariance)})

    _freeze(extractor)
    with torch.no_grad():
        logits = extractor.family_logits(torch.from_numpy(valid_ds.mels))
        acc = float((logits.argmax(1).numpy() == valid_ds.family).mean())
    run.log_metrics({"stage": "extractor", "final": True, "valid_family_accuracy": acc})

    out = run.checkpoint_path()
    SynthStack(cfg=cfg, extractor=extractor,
               meta={"families": manifest.families, "stage": "extractor",
                     "norm_min_db": manifest.norm_min_db, "norm_max_db": manifest.norm_max_db,
                     "valid_family_accuracy": acc}).save(out)
    return out


def train_classifiers(cfg: RunConfig, manifest: DatasetManifest, run: RunDir,
                      seed: int | None = None, iters: int | None = None) -> Path:
    """Instrument-family and pitch classifiers used by the metric suite."""
    seed = cfg.seed if seed is None else seed
    iters = cfg.train("classifier_iters") if iters is None else iters
    mel_cfg = manifest.mel_config(cfg.mel)
    train_ds = MelDataset(manifest, mel_cfg, "train")
    valid_ds = MelDataset(manifest, mel_cfg, "valid")
    batch = cfg.train("classifier_batch")

    from .config import NUM_PITCHES
    inst = build_classifier(cfg, len(manifest.families), "instrument", seed=seed)
    pitch = build_classifier(cfg, NUM_PITCHES, "pitch", seed=seed)
    accs = {}
    for tag, clf, labels, valid_labels in (
        ("instrument", inst, train_ds.family, valid_ds.family),
        ("pitch", pitch, train_ds.pitch_idx, valid_ds.pitch_idx),
    ):
        stage_seed = derive_seed(seed, f"stage:classifier:{tag}")
        opt = torch.optim.Adam(clf.parameters(), lr=cfg.train("classifier_lr"))
        for step in range(iters):
            idx = step_batch_indices(len(train_ds), batch, step, stage_seed)
            x = torch.from_numpy(train_ds.mels[idx])
            y = torch.from_numpy(labels[idx])
            loss = F.cross_entropy(clf(x).logits, y)
            _finite_or_raise(loss, f"{tag} classifier loss", {"step": step})
            opt.zero_grad()
            loss.backward()
            opt.step()
            run.log_metrics({"stage": f"classifier:{tag}", "step": step, "loss": _f(loss)})
        _freeze(clf)
        with torch.no_grad():
            pred = clf(torch.from_numpy(valid_ds.mels)).logits.argmax(1).numpy()
        accs[tag] = float((pred == valid_labels).mean())
        run.log_metrics({"stage": f"classifier:{tag}", "final": True, "valid_accuracy": accs[tag]})

    out = run.checkpoint_path()
    SynthStack(cfg=cfg, inst_classifier=inst, pitch_classifier=pitch,
               meta={"families": manifest.families, "stage": "classifiers",
                     "valid_accuracy": accs}).save(out)
    return out


# --- adversarial base training ------------------------------------------------------


def train_base_generator(cfg: RunConfig, manifest: DatasetManifest, run: RunDir,
                         extractor_ckpt: Path, seed: int | None = None,
                         iters: int | None = None) -> Path:
    """Desk-scale pre-training of the conditional generator and projection
    discriminator with instance conditioning and lazy R1."""
    seed = cfg.seed if seed is None else seed
    iters = cfg.train("base_iters") if iters is None else iters
    stage_seed = derive_seed(seed, "stage:base")
    mel_cfg = manifest.mel_config(cfg.mel)
    train_ds = MelDataset(manifest, mel_cfg, "train")

    base = load_stack(extractor_ckpt, cfg).require("extractor")
    extractor = base.extractor
    _freeze(extractor)
    index = conditioning.build_index(train_ds, extractor, k=cfg.train("knn_k"))

    generator = build_generator(cfg, seed=seed)
    disc = build_discriminator(cfg, seed=seed)
    opt_g = _adam(cfg, generator.parameters())
    opt_d = _adam(cfg, disc.parameters())

    batch = cfg.train("batch_size")
    p_recon = cfg.train("p_recon")
    gamma = cfg.train("r1_gamma")
    r1_interval = cfg.train("r1_interval")
    lam_recon = cfg.train("base_lambda_recon")
    lam_timbre = cfg.train("base_lambda_timbre")
    guard_floor = cfg.train("divergence_guard_floor")
    guard_steps = cfg.train("divergence_guard_steps")
    z_dim = cfg.model("z_dim")
    low_d_streak = 0

    for step in range(iters):
        rng = step_rng(stage_seed, step)
        idx = step_batch_indices(len(train_ds), batch, step, stage_seed)
        x_np = train_ds.mels[idx]
        x = torch.from_numpy(x_np)
        with torch.no_grad():
            h = extractor(x)
        xn, pn_idx, used = _neighbor_batch(h, x_np, train_ds.pitches[idx], index, p_recon, rng)
        x_nb = torch.from_numpy(xn)
        p_nb = torch.from_numpy(pn_idx)
        z = torch.from_numpy(rng.standard_normal((x.shape[0], z_dim)).astype(np.float32))

        fake = generator(h, z, p_nb)

        d_real = disc(x_nb, p_nb, h)
        d_fake = disc(fake.detach(), p_nb, h)
        d_loss = discriminator_loss(d_real, d_fake)
        _finite_or_raise(d_loss, "discriminator loss", {"step": step})
        r1 = torch.zeros(())
        if step % r1_interval == 0:
            r1 = r1_penalty(disc, x_nb, p_nb, h, gamma)
        opt_d.zero_grad()
        (d_loss + r1 * r1_interval).backward()
        opt_d.step()

        d_fake2 = disc(fake, p_nb, h)
        gate = torch.from_numpy(used.astype(np.float32))
        recon = (sq_l2(x.flatten(1), fake.flatten(1)) * gate).mean()
        timbre = sq_l2(h, extractor(fake)).mean()
        g_adv = F.softplus(-d_fake2).mean()
        g_loss = g_adv + lam_recon * recon + lam_timbre * timbre
        _finite_or_raise(g_loss, "generator loss", {"step": step})
        opt_g.zero_grad()
        g_loss.backward()
        torch.nn.utils.clip_grad_norm_(generator.parameters(), cfg.train("grad_clip"))
        opt_g.step()

        low_d_streak = low_d_streak + 1 if _f(d_loss) < guard_floor else 0
        if low_d_streak >= guard_steps:
            raise DivergenceError("discriminator collapsed", {
                "step": step, "d_loss": _f(d_loss), "streak": low_d_streak})

        if step % cfg.train("log_every") == 0:
            run.log_metrics({
                "stage": "base", "step": step, "loss": _f(g_loss),
                "adv_g": _f(g_adv), "adv_d": _f(d_loss), "r1": _f(r1),
                "recon": _f(recon), "timbre": _f(timbre),
                "used_label_pitch_rate": _f(gate.mean()),
            })

    _freeze(generator, disc)
    out = run.checkpoint_path()
    SynthStack(cfg=cfg, extractor=extractor, generator=generator, discriminator=disc,
               index=index,
               meta={"families": manifest.families, "stage": "base",
                     "norm_min_db": manifest.norm_min_db, "norm_max_db": manifest.norm_max_db},
               ).save(out)
    return out


# --- hypernetwork stages -------------------------------------------------------------


def _refinement_forward(extractor, generator, hyper, x: torch.Tensor, h: torch.Tensor,
                        p_idx: torch.Tensor, z_dim: int):
    """Shared forward of both stages: initial reconstruction under no_grad
    (nothing trainable upstream), refined pass differentiable through H."""
    z = _assert_zero_noise(torch.zeros(x.shape[0], z_dim))
    with torch.no_grad():
        x_init = generator(h, z, p_idx)
        h_init = extractor(x_init)
    delta = hyper(h, h_init, x=x, x_init=x_init)
    x_fine = generator(h, z, p_idx, offsets=delta.offsets)
    return x_init, h_init, delta, x_fine


def _stage_state_sections(step: int, opts: dict[str, torch.optim.Optimizer]) -> dict[str, np.ndarray]:
    arrays = {"iteration": np.array([step], dtype=np.int64)}
    for prefix, opt in opts.items():
        arrays.update(_opt_arrays(opt, prefix))
    return arrays


def _run_hypernet_stage(cfg: RunConfig, manifest: DatasetManifest, run: RunDir, stage: str,
                        source_ckpt: Path, seed: int | None, iters: int | None,
                        resume: bool) -> Path:
    assert stage in ("pre", "fine")
    seed = cfg.seed if seed is None else seed
    default_iters = cfg.train("pre_iters") if stage == "pre" else cfg.train("fine_iters")
    iters = default_iters if iters is None else iters
    stage_seed = derive_seed(seed, f"stage:{stage}")
    mel_cfg = manifest.mel_config(cfg.mel)
    train_ds = MelDataset(manifest, mel_cfg, "train")

    start_step = 0
    resume_arrays: dict[str, np.ndarray] | None = None
    source = source_ckpt
    if resume:
        latest = run.latest_checkpoint()
        if latest is not None:
            source = latest

    stk = load_stack(source, cfg)
    stk.require("extractor", "generator", "index")
    extractor, generator, index = stk.extractor, stk.generator, stk.index
    _freeze(extractor, generator)
    # KNN queries need the neighbor mel grids, row-aligned with the index.
    id_to_row = {cid: i for i, cid in enumerate(train_ds.clip_ids)}
    index.attach_mels(train_ds.mels[[id_to_row[cid] for cid in index.clip_ids]])

    if stage == "pre":
        if stk.hypernet is None or not resume:
            from .hypernet import build_hypernet
            hyper = build_hypernet(cfg, generator, seed=seed)
        else:
            hyper = stk.hypernet
        disc = stk.discriminator  # carried through for the fine stage
        weights = LossWeights.pretrain(cfg)
    else:
        stk.require("hypernet", "discriminator")
        hyper, disc = stk.hypernet, stk.discriminator
        weights = LossWeights.finetune(cfg)
    hyper.train()
    hyper.requires_grad_(True)

    opts = {"opt_h": _adam(cfg, hyper.parameters())}
    if stage == "fine":
        disc.train()
        disc.requires_grad_(True)
        opts["opt_d"] = _adam(cfg, disc.parameters())

    if resume:
        from . import checkpoints as ckpt_mod
        sections, _hdr = ckpt_mod.load_checkpoint(source, expect_config_hash=cfg.config_hash())
        if "train_state" in sections:
            resume_arrays = sections["train_state"]
            start_step = int(resume_arrays["iteration"][0])
            for prefix, opt in opts.items():
                _load_opt_arrays(opt, resume_arrays, prefix)

    batch = cfg.train("batch_size")
    p_recon = cfg.train("p_recon")
    gamma = cfg.train("r1_gamma")
    r1_interval = cfg.train("r1_interval")
    z_dim = cfg.model("z_dim")
    grad_clip = cfg.train("grad_clip")
    ckpt_every = cfg.train("checkpoint_every")

    def save_bundle(path: Path, step: int) -> None:
        SynthStack(cfg=cfg, extractor=extractor, generator=generator, hypernet=hyper,
                   discriminator=disc, index=index,
                   meta={"families": manifest.families, "stage": stage,
                         "norm_min_db": manifest.norm_min_db, "norm_max_db": manifest.norm_max_db},
                   ).save(path, extra_sections={"train_state": _stage_state_sections(step, opts)},
                          extra_meta={"iteration": step})

    for step in range(start_step, iters):
        rng = step_rng(stage_seed, step)
        idx = step_batch_indices(len(train_ds), batch, step, stage_seed)
        x_np = train_ds.mels[idx]
        x = torch.from_numpy(x_np)
        with torch.no_grad():
            h = extractor(x)
        xn, pn_idx, used = _neighbor_batch(h, x_np, train_ds.pitches[idx], index, p_recon, rng)
        p_nb = torch.from_numpy(pn_idx)
        gate = torch.from_numpy(used.astype(np.float32))

        x_init, h_init, delta, x_fine = _refinement_forward(
            extractor, generator, hyper, x, h, p_nb, z_dim)
        h_fine = extractor(x_fine)
        pre = pretrain_loss(x, x_fine, h, h_fine, gate, weights)
        timbre_term, recon_term = pretrain_terms(x, x_fine, h, h_fine, gate)

        record = {"stage": stage, "step": step, "timbre": timbre_term, "recon": recon_term,
                  "used_label_pitch_rate": _f(gate.mean()),
                  "adv_g": None, "adv_d": None, "r1": None}

        if stage == "pre":
            _finite_or_raise(pre, "pre-training loss", {"step": step})
            opts["opt_h"].zero_grad()
            pre.backward()
            torch.nn.utils.clip_grad_norm_(hyper.parameters(), grad_clip)
            opts["opt_h"].step()
            record["loss"] = _f(pre)
        else:
            x_nb = torch.from_numpy(xn)
            d_real = disc(x_nb, p_nb, h)
            d_fake = disc(x_fine.detach(), p_nb, h)
            d_loss = discriminator_loss(d_real, d_fake)
            _finite_or_raise(d_loss, "discriminator loss", {"step": step})
            r1 = torch.zeros(())
            if step % r1_interval == 0:
                r1 = r1_penalty(disc, x_nb, p_nb, h, gamma)
            opts["opt_d"].zero_grad()
            (d_loss + r1 * r1_interval).backward()
            opts["opt_d"].step()

            d_fake2 = disc(x_fine, p_nb, h)
            g_loss = generator_adv_loss(d_fake2, pre)
            _finite_or_raise(g_loss, "hypernetwork loss", {"step": step})
            opts["opt_h"].zero_grad()
            g_loss.backward()
            torch.nn.utils.clip_grad_norm_(hyper.parameters(), grad_clip)
            opts["opt_h"].step()
            record.update({"loss": _f(g_loss), "adv_g": float(F.softplus(-d_fake2).detach().mean()),
                           "adv_d": _f(d_loss), "r1": _f(r1)})

        if step % cfg.train("log_every") == 0:
            run.log_metrics(record)
        if ckpt_every and (step + 1) % ckpt_every == 0 and step + 1 < iters:
            save_bundle(run.checkpoint_path(step + 1), step + 1)

    out = run.checkpoint_path()
    save_bundle(out, iters)
    return out


def pretrain_hypernet(cfg: RunConfig, manifest: DatasetManifest, run: RunDir, base_ckpt: Path,
                      seed: int | None = None, iters: int | None = None, resume: bool = False) -> Path:
    return _run_hypernet_stage(cfg, manifest, run, "pre", base_ckpt, seed, iters, resume)


def finetune_hypernet(cfg: RunConfig, manifest: DatasetManifest, run: RunDir, pre_ckpt: Path,
                      seed: int | None = None, iters: int | None = None, resume: bool = False) -> Path:
    return _run_hypernet_stage(cfg, manifest, run, "fine", pre_ckpt, seed, iters, resume)


STAGE_NAMES = ("extractor", "classifiers", "base", "hypernet-pre", "hypernet-adv")


def run_stage(cfg: RunConfig, stage: str, manifest: DatasetManifest, run: RunDir,
              prereq_ckpt: Path | None = None, seed: int | None = None,
              iters: int | None = None, resume: bool = False) -> Path:
    """Dispatch one training stage into a run directory; returns the final
    checkpoint path."""
    if stage == "extractor":
        return train_feature_extractor(cfg, manifest, run, seed=seed, iters=iters)
    if stage == "classifiers":
        return train_classifiers(cfg, manifest, run, seed=seed, iters=iters)
    if stage == "base":
        if prereq_ckpt is None:
            raise ValueError("base stage needs the extractor checkpoint")
        return train_base_generator(cfg, manifest, run, prereq_ckpt, seed=seed, iters=iters)
    if stage == "hypernet-pre":
        if prereq_ckpt is None:
            raise ValueError("hypernet-pre needs the base checkpoint")
        return pretrain_hypernet(cfg, manifest, run, prereq_ckpt, seed=seed, iters=iters, resume=resume)
    if stage == "hypernet-adv":
        if prereq_ckpt is None:
            raise ValueError("hypernet-adv needs the pre-training checkpoint")
        return finetune_hypernet(cfg, manifest, run, prereq_ckpt, seed=seed, iters=iters, resume=resume)
    raise ValueError(f"unknown stage {stage!r} (expected one of {STAGE_NAMES})")
