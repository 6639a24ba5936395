"""The loaded model stack: every component the synthesis/eval paths need,
serialized together in one versioned bundle with the run's config hash."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoints, conditioning, models
from .config import RunConfig
from .hypernet import HyperNet, MelInputHyperNet, build_hypernet


@dataclass
class SynthStack:
    cfg: RunConfig
    extractor: models.FeatureExtractor | None = None
    generator: models.Generator | None = None
    hypernet: HyperNet | MelInputHyperNet | None = None
    discriminator: models.Discriminator | None = None
    inst_classifier: models.MelClassifier | None = None
    pitch_classifier: models.MelClassifier | None = None
    index: conditioning.FeatureIndex | None = None
    meta: dict = field(default_factory=dict)

    def require(self, *names: str) -> "SynthStack":
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise checkpoints.CheckpointError(f"stack is missing components: {', '.join(missing)}")
        return self

    @property
    def families(self) -> list[str]:
        return self.meta.get("families", [])

    def eval_mode(self) -> "SynthStack":
        for name in ("extractor", "generator", "hypernet", "discriminator",
                     "inst_classifier", "pitch_classifier"):
            mod = getattr(self, name)
            if mod is not None:
                mod.eval()
                mod.requires_grad_(False)
        return self

    def component_sections(self) -> dict[str, dict[str, np.ndarray]]:
        sections = {}
        for name in ("extractor", "generator", "hypernet", "discriminator",
                     "inst_classifier", "pitch_classifier"):
            mod = getattr(self, name)
            if mod is not None:
                sections[name] = models.state_to_numpy(mod)
        if self.index is not None:
            arrays, idx_meta = conditioning.index_to_sections(self.index)
            sections["index"] = arrays
            self.meta["index"] = idx_meta
        return sections

    def save(self, path: str | Path, extra_sections: dict | None = None,
             extra_meta: dict | None = None) -> None:
        sections = self.component_sections()
        if extra_sections:
            sections.update(extra_sections)
        meta = dict(self.meta)
        if self.hypernet is not None:
            meta["covered_layers"] = list(self.hypernet.covered_layers)
            meta["hypernet_input"] = self.hypernet.input_kind
        if extra_meta:
            meta.update(extra_meta)
        checkpoints.save_checkpoint(path, sections, self.cfg.config_hash(), meta)


def load_stack(path: str | Path, cfg: RunConfig, force: bool = False,
               index_mels: np.ndarray | None = None) -> SynthStack:
    """Rebuild modules from a bundle; refuses config-hash mismatches unless forced."""
    sections, header = checkpoints.load_checkpoint(path, expect_config_hash=cfg.config_hash(), force=force)
    meta = header.get("meta", {})
    stack = SynthStack(cfg=cfg, meta=meta)

    if "extractor" in sections:
        n_families = len(meta.get("families", [])) or int(
            sections["extractor"]["family_head.weight"].shape[0])
        ext = models.build_extractor(cfg, n_families)
        models.load_numpy_state(ext, sections["extractor"])
        stack.extractor = ext
    if "generator" in sections:
        gen = models.build_generator(cfg)
        models.load_numpy_state(gen, sections["generator"])
        stack.generator = gen
    if "hypernet" in sections:
        if stack.generator is None:
            raise checkpoints.CheckpointError("hypernet section without a generator section")
        hyp = build_hypernet(cfg, stack.generator)
        saved_layers = meta.get("covered_layers")
        if saved_layers is not None and list(saved_layers) != list(hyp.covered_layers):
            raise checkpoints.CheckpointError(
                f"covered layers changed: checkpoint {saved_layers} vs model {hyp.covered_layers}")
        models.load_numpy_state(hyp, sections["hypernet"])
        stack.hypernet = hyp
    if "discriminator" in sections:
        disc = models.build_discriminator(cfg)
        models.load_numpy_state(disc, sections["discriminator"])
        stack.discriminator = disc
    if "inst_classifier" in sections:
        clf = models.build_classifier(cfg, int(sections["inst_classifier"]["logit_layer.weight"].shape[0]), "instrument")
        models.load_numpy_state(clf, sections["inst_classifier"])
        stack.inst_classifier = clf
    if "pitch_classifier" in sections:
        clf = models.build_classifier(cfg, int(sections["pitch_classifier"]["logit_layer.weight"].shape[0]), "pitch")
        models.load_numpy_state(clf, sections["pitch_classifier"])
        stack.pitch_classifier = clf
    if "index" in sections:
        stack.index = conditioning.index_from_sections(sections["index"], meta["index"], mels=index_mels)

    stack.eval_mode()
    return stack


def merge_bundles(cfg: RunConfig, *paths: str | Path, force: bool = False) -> SynthStack:
    """Load several bundles and overlay their components (later wins)."""
    stack = SynthStack(cfg=cfg)
    for p in paths:
        if p is None:
            continue
        part = load_stack(p, cfg, force=force)
        for name in ("extractor", "generator", "hypernet", "discriminator",
                     "inst_classifier", "pitch_classifier", "index"):
            val = getattr(part, name)
            if val is not None:
                setattr(stack, name, val)
        stack.meta.update(part.meta)
    return stack.eval_mode()
