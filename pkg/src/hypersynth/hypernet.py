"""Weight-offset hypernetwork and the feedback refinement pass.

The hypernetwork sees the input sound's timbre feature and the feature of the
generator's initial reconstruction, and predicts one multiplicative offset per
output channel of every covered generator layer.  Offset heads are
zero-initialized, so a fresh hypernetwork leaves the generator bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .config import RunConfig
from .models import (EqualizedLinear, FeatureExtractor, Generator, derive_seed, generate)


class OffsetError(ValueError):
    pass


def _safe(name: str) -> str:
    return name.replace(".", "__")


@dataclass
class WeightOffsets:
    """Per-layer channel offsets; tensors are (B, out_channels)."""

    offsets: dict[str, torch.Tensor]
    covered_layers: list[str]

    def single(self, i: int = 0) -> dict[str, torch.Tensor]:
        """One sample's offsets shaped (out_channels, 1, 1, 1)."""
        return {name: self.offsets[name][i].reshape(-1, 1, 1, 1) for name in self.covered_layers}

    @property
    def batch_size(self) -> int:
        return next(iter(self.offsets.values())).shape[0]


def apply_offsets(params: dict[str, torch.Tensor], offsets: dict[str, torch.Tensor],
                  generator: Generator) -> dict[str, torch.Tensor]:
    """Pure parameter transform: covered weights scaled by (1 + delta).

    `offsets` maps covered-layer names (e.g. "b16.conv0") to per-channel
    tensors reshapeable to (out_channels, 1, 1, 1).  `params` is untouched;
    layers outside the offset map are returned as the same tensors.
    """
    known = {name for name, _ in generator.covered_layers()}
    out = dict(params)
    for name, delta in offsets.items():
        if name not in known:
            raise OffsetError(f"unknown or uncovered generator layer {name!r}")
        key = f"blocks.{name}.weight"
        if key not in out:
            raise OffsetError(f"generator parameter table is missing {key!r}")
        weight = out[key]
        delta = torch.as_tensor(delta, dtype=weight.dtype).reshape(-1, 1, 1, 1)
        if delta.shape[0] != weight.shape[0]:
            raise OffsetError(f"{name}: offset channels {delta.shape[0]} != weight out-channels {weight.shape[0]}")
        if not torch.all(torch.isfinite(delta)):
            raise OffsetError(f"{name}: non-finite offsets")
        out[key] = weight * (1.0 + delta)
    return out


class _OffsetHeads(nn.Module):
    """Refinement heads: per-group shared trunk + zero-initialized per-layer
    projections, so initial offsets are exactly zero."""

    def __init__(self, latent_dim: int, hidden_dim: int, covered: list[tuple[str, int]],
                 grouping: str, layer_resolution):
        super().__init__()
        if grouping not in ("resolution", "per_layer"):
            raise ValueError(f"unknown hypernet grouping {grouping!r}")
        self.covered = covered
        group_of = {}
        for name, _ in covered:
            group_of[name] = f"r{layer_resolution(name)}" if grouping == "resolution" else _safe(name)
        self.group_of = group_of
        self.trunks = nn.ModuleDict()
        for group in sorted(set(group_of.values())):
            self.trunks[group] = EqualizedLinear(latent_dim, hidden_dim)
        self.projections = nn.ModuleDict()
        for name, out_ch in covered:
            proj = nn.Linear(hidden_dim, out_ch)
            nn.init.zeros_(proj.weight)
            nn.init.zeros_(proj.bias)
            self.projections[_safe(name)] = proj

    def forward(self, latent: torch.Tensor) -> dict[str, torch.Tensor]:
        trunk_out = {g: F.leaky_relu(self.trunks[g](latent), 0.2) for g in self.trunks}
        return {name: self.projections[_safe(name)](trunk_out[self.group_of[name]])
                for name, _ in self.covered}


class HyperNet(nn.Module):
    """Feature-input hypernetwork: two linear layers fuse (h, h_init) into the
    refinement latent, then grouped heads emit per-layer offsets."""

    input_kind = "features"

    def __init__(self, feat_dim: int, latent_dim: int, hidden_dim: int,
                 covered: list[tuple[str, int]], grouping: str, layer_resolution):
        super().__init__()
        self.fuse1 = EqualizedLinear(2 * feat_dim, latent_dim)
        self.fuse2 = EqualizedLinear(latent_dim, latent_dim)
        self.heads = _OffsetHeads(latent_dim, hidden_dim, covered, grouping, layer_resolution)
        self.covered_layers = [name for name, _ in covered]

    def forward(self, h: torch.Tensor, h_init: torch.Tensor, x=None, x_init=None) -> WeightOffsets:
        if h.shape != h_init.shape:
            raise OffsetError(f"feature shape mismatch {tuple(h.shape)} vs {tuple(h_init.shape)}")
        latent = F.leaky_relu(self.fuse1(torch.cat([h, h_init], dim=1)), 0.2)
        latent = F.leaky_relu(self.fuse2(latent), 0.2)
        return WeightOffsets(self.heads(latent), list(self.covered_layers))


class MelInputHyperNet(nn.Module):
    """Ablation variant: a conv encoder reads the stacked (x, x_init) grids.

    Kept as a config switch (model.hypernet_input = "mel"); it carries more
    parameters than the feature-input network at equal generator size and is
    not part of the evaluated pipeline.
    """

    input_kind = "mel"

    def __init__(self, encoder_channels: list[int], latent_dim: int, hidden_dim: int,
                 covered: list[tuple[str, int]], grouping: str, layer_resolution):
        super().__init__()
        convs = []
        prev = 2
        for ch in encoder_channels:
            convs.append(nn.Conv2d(prev, ch, 3, padding=1))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.to_latent = EqualizedLinear(prev, latent_dim)
        self.fuse2 = EqualizedLinear(latent_dim, latent_dim)
        self.heads = _OffsetHeads(latent_dim, hidden_dim, covered, grouping, layer_resolution)
        self.covered_layers = [name for name, _ in covered]

    def forward(self, h=None, h_init=None, x: torch.Tensor | None = None,
                x_init: torch.Tensor | None = None) -> WeightOffsets:
        if x is None or x_init is None:
            raise OffsetError("mel-input hypernetwork needs x and x_init grids")
        y = torch.stack([torch.as_tensor(x), torch.as_tensor(x_init)], dim=1)
        for conv in self.convs:
            y = F.avg_pool2d(F.leaky_relu(conv(y), 0.2), 2)
        latent = F.leaky_relu(self.to_latent(y.mean(dim=(2, 3))), 0.2)
        latent = F.leaky_relu(self.fuse2(latent), 0.2)
        return WeightOffsets(self.heads(latent), list(self.covered_layers))


def build_hypernet(cfg: RunConfig, generator: Generator, seed: int | None = None):
    torch.manual_seed(derive_seed(cfg.seed if seed is None else seed, "hypernet"))
    covered = generator.covered_layers()
    kind = cfg.model("hypernet_input")
    if kind == "features":
        return HyperNet(
            feat_dim=cfg.model("feat_dim"),
            latent_dim=cfg.model("hypernet_latent"),
            hidden_dim=cfg.model("hypernet_hidden"),
            covered=covered,
            grouping=cfg.model("hypernet_grouping"),
            layer_resolution=generator.layer_resolution,
        )
    if kind == "mel":
        return MelInputHyperNet(
            encoder_channels=cfg.model("classifier_channels"),
            latent_dim=cfg.model("hypernet_latent"),
            hidden_dim=cfg.model("hypernet_hidden"),
            covered=covered,
            grouping=cfg.model("hypernet_grouping"),
            layer_resolution=generator.layer_resolution,
        )
    raise ValueError(f"unknown hypernet input kind {kind!r}")


@dataclass
class RefineResult:
    x_init: torch.Tensor
    x_fine: torch.Tensor
    offsets: WeightOffsets
    h: torch.Tensor
    h_init: torch.Tensor


def refine(extractor: FeatureExtractor, generator: Generator, hypernet,
           pitch_idx: torch.Tensor, x: torch.Tensor | None = None,
           h: torch.Tensor | None = None) -> RefineResult:
    """One feedback-refinement pass with the fixed all-zeros noise vector.

    h = f(x); x_init = G(h, 0, p); h_init = f(x_init);
    delta = H(h, h_init); x_fine = G(h, 0, p) under offset-modulated weights.
    Gradients flow from x_fine into the hypernetwork only; the generator and
    extractor are treated as frozen (nothing trainable sits upstream of
    h_init, so detaching it is gradient-equivalent).

    Either x or h must be given.  When only h is present (interpolated
    timbres have no source grid), the mel-input hypernetwork variant reads
    the initial reconstruction in place of the missing input grid.
    """
    if x is None and h is None:
        raise OffsetError("refine needs an input grid or a timbre feature")
    if x is not None:
        x = torch.as_tensor(x)
        if x.dim() == 2:
            x = x.unsqueeze(0)
    pitch_idx = torch.as_tensor(pitch_idx).reshape(-1)
    with torch.no_grad():
        if h is None:
            h = extractor(x)
        z = torch.zeros(h.shape[0], generator.z_dim, dtype=h.dtype)
        x_init = generate(generator, h, z, pitch_idx)
        h_init = extractor(x_init)
    delta = hypernet(h, h_init, x=x if x is not None else x_init, x_init=x_init)
    x_fine = generate(generator, h, z, pitch_idx, offsets=delta.offsets)
    return RefineResult(x_init=x_init, x_fine=x_fine, offsets=delta, h=h, h_init=h_init)
