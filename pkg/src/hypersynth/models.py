"""Neural components: pitch-invariant feature extractor, conditional
style-based generator, projection discriminator, and evaluation classifiers.

Conventions shared by every module here:
  * forward passes are pure functions of (inputs, parameters); no noise
    injection, no dropout, no batchnorm;
  * generators emit tanh-bounded grids shaped (batch, mel_bins, frames);
  * feature vectors are unit L2 norm.

The generator's modulated convolutions skip StyleGAN2's weight demodulation:
demodulation renormalizes per output channel and would exactly cancel the
channelwise multiplicative weight offsets the refinement hypernetwork
predicts, so offsets only act with it off.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import MIDI_MAX, MIDI_MIN, NUM_PITCHES, RunConfig


@dataclass(frozen=True)
class PitchLabel:
    midi: int

    def __post_init__(self):
        if not (MIDI_MIN <= self.midi <= MIDI_MAX):
            raise ValueError(f"MIDI pitch {self.midi} outside [{MIDI_MIN},{MIDI_MAX}]")

    @property
    def index(self) -> int:
        return self.midi - MIDI_MIN


@dataclass
class ClassifierOutput:
    logits: torch.Tensor
    feature: torch.Tensor


def derive_seed(base: int, tag: str) -> int:
    digest = hashlib.sha256(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def normalize_features(h: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    return h / (h.norm(dim=-1, keepdim=True) + eps)


class EqualizedLinear(nn.Module):
    """Linear layer with runtime weight scaling (equalized learning rate)."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True, bias_init: float = 0.0):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_features, in_features))
        self.bias = nn.Parameter(torch.full((out_features,), float(bias_init))) if bias else None
        self.scale = 1.0 / math.sqrt(in_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.weight * self.scale, self.bias)


class EqualizedConv2d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, bias: bool = True):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch)) if bias else None
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.padding = kernel // 2

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(x, self.weight * self.scale, self.bias, padding=self.padding)


class MappingNetwork(nn.Module):
    """MLP from the fused (h, z, pitch embedding) vector to the style latent."""

    def __init__(self, in_dim: int, w_dim: int, n_layers: int):
        super().__init__()
        layers = []
        dim = in_dim
        for _ in range(n_layers):
            layers += [EqualizedLinear(dim, w_dim), nn.LeakyReLU(0.2)]
            dim = w_dim
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class ModulatedConv(nn.Module):
    """Style-modulated convolution with optional channelwise weight offsets.

    Weight offsets follow theta_hat = theta * (1 + delta) per output channel;
    since the conv is linear that equals scaling its output channels before
    the bias, which is how the batched per-sample path is computed.
    """

    def __init__(self, w_dim: int, in_ch: int, out_ch: int, kernel: int):
        super().__init__()
        self.style = EqualizedLinear(w_dim, in_ch, bias_init=1.0)
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel))
        self.bias = nn.Parameter(torch.zeros(out_ch))
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.padding = kernel // 2
        self.out_channels = out_ch

    def forward(self, x: torch.Tensor, w: torch.Tensor, offset: torch.Tensor | None = None) -> torch.Tensor:
        s = self.style(w)  # (B, in_ch)
        y = F.conv2d(x * s[:, :, None, None], self.weight * self.scale, padding=self.padding)
        if offset is not None:
            y = y * (1.0 + offset.reshape(offset.shape[0], self.out_channels, 1, 1))
        return y + self.bias.view(1, -1, 1, 1)


class SynthesisBlock(nn.Module):
    """One resolution: (upsample) -> one or two modulated convs -> skip toRGB."""

    def __init__(self, w_dim: int, in_ch: int, out_ch: int, first: bool):
        super().__init__()
        self.first = first
        if first:
            self.conv = ModulatedConv(w_dim, in_ch, out_ch, 3)
        else:
            self.conv0 = ModulatedConv(w_dim, in_ch, out_ch, 3)
            self.conv1 = ModulatedConv(w_dim, out_ch, out_ch, 3)
        self.torgb = ModulatedConv(w_dim, out_ch, 1, 1)

    def forward(self, x, w, rgb, offsets: dict, prefix: str):
        if self.first:
            x = F.leaky_relu(self.conv(x, w, offsets.get(f"{prefix}.conv")), 0.2)
        else:
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = F.leaky_relu(self.conv0(x, w, offsets.get(f"{prefix}.conv0")), 0.2)
            x = F.leaky_relu(self.conv1(x, w, offsets.get(f"{prefix}.conv1")), 0.2)
            rgb = F.interpolate(rgb, scale_factor=2, mode="bilinear", align_corners=False)
        skip = self.torgb(x, w, offsets.get(f"{prefix}.torgb"))
        rgb = skip if rgb is None else rgb + skip
        return x, rgb


class Generator(nn.Module):
    """Conditional style-based generator over a square mel canvas.

    Conditioning (timbre feature h, noise z, pitch index) is concatenated and
    fed through the mapping network; every synthesis conv takes the resulting
    style latent.  `offsets` maps covered-layer names to per-sample channel
    offsets, shape (B, out_channels) or broadcastable.
    """

    def __init__(self, feat_dim: int, z_dim: int, w_dim: int, pitch_embed_dim: int,
                 channels: dict[int, int], base_res: int, canvas: int,
                 mapping_layers: int = 3, n_pitches: int = NUM_PITCHES):
        super().__init__()
        if canvas < base_res or canvas & (canvas - 1):
            raise ValueError(f"canvas {canvas} must be a power of two >= {base_res}")
        self.feat_dim, self.z_dim, self.canvas = feat_dim, z_dim, canvas
        self.resolutions = []
        res = base_res
        while res <= canvas:
            self.resolutions.append(res)
            res *= 2
        for r in self.resolutions:
            if r not in channels:
                raise ValueError(f"no channel width configured for resolution {r}")

        self.pitch_embed = nn.Embedding(n_pitches, pitch_embed_dim)
        self.mapping = MappingNetwork(feat_dim + z_dim + pitch_embed_dim, w_dim, mapping_layers)
        self.const = nn.Parameter(torch.randn(1, channels[base_res], base_res, base_res))
        blocks = {}
        prev = channels[base_res]
        for i, r in enumerate(self.resolutions):
            blocks[f"b{r}"] = SynthesisBlock(w_dim, prev, channels[r], first=(i == 0))
            prev = channels[r]
        self.blocks = nn.ModuleDict(blocks)

    def covered_layers(self) -> list[tuple[str, int]]:
        """Offsettable modulated convs in fixed order; the final output
        projection (last block's torgb) is excluded."""
        out = []
        for i, r in enumerate(self.resolutions):
            block = self.blocks[f"b{r}"]
            prefix = f"b{r}"
            if block.first:
                out.append((f"{prefix}.conv", block.conv.out_channels))
            else:
                out.append((f"{prefix}.conv0", block.conv0.out_channels))
                out.append((f"{prefix}.conv1", block.conv1.out_channels))
            if i < len(self.resolutions) - 1:
                out.append((f"{prefix}.torgb", block.torgb.out_channels))
        return out

    def layer_resolution(self, name: str) -> int:
        return int(name.split(".")[0][1:])

    def forward(self, h: torch.Tensor, z: torch.Tensor, pitch_idx: torch.Tensor,
                offsets: dict[str, torch.Tensor] | None = None) -> torch.Tensor:
        offsets = offsets or {}
        p = self.pitch_embed(pitch_idx)
        w = self.mapping(torch.cat([h, z, p], dim=1))
        x = self.const.expand(h.shape[0], -1, -1, -1)
        rgb = None
        for r in self.resolutions:
            x, rgb = self.blocks[f"b{r}"](x, w, rgb, offsets, f"b{r}")
        return torch.tanh(rgb).squeeze(1)


class Discriminator(nn.Module):
    """Projection discriminator: unconditional score plus inner products of the
    image feature with pitch-embedding and timbre-feature projections."""

    def __init__(self, feat_dim: int, channels: dict[int, int], base_res: int, canvas: int,
                 n_pitches: int = NUM_PITCHES):
        super().__init__()
        self.canvas = canvas
        res_list = []
        res = canvas
        while res >= base_res:
            res_list.append(res)
            res //= 2
        self.res_list = res_list
        self.from_rgb = EqualizedConv2d(1, channels[canvas], 1)
        convs = {}
        for i, r in enumerate(res_list):
            ch_next = channels[res_list[i + 1]] if i + 1 < len(res_list) else channels[r]
            convs[f"d{r}"] = EqualizedConv2d(channels[r], ch_next, 3)
        self.convs = nn.ModuleDict(convs)
        d_feat = channels[res_list[-1]]
        self.final = EqualizedConv2d(d_feat, d_feat, 3)
        self.score = EqualizedLinear(d_feat, 1)
        self.pitch_embed = nn.Embedding(n_pitches, d_feat)
        self.h_proj = EqualizedLinear(feat_dim, d_feat, bias=False)

    def image_feature(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        y = F.leaky_relu(self.from_rgb(x), 0.2)
        for i, r in enumerate(self.res_list):
            y = F.leaky_relu(self.convs[f"d{r}"](y), 0.2)
            if i < len(self.res_list) - 1:
                y = F.avg_pool2d(y, 2)
        y = F.leaky_relu(self.final(y), 0.2)
        return y.sum(dim=(2, 3))

    def forward(self, x: torch.Tensor, pitch_idx: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        phi = self.image_feature(x)
        logit = self.score(phi).squeeze(1)
        logit = logit + (self.pitch_embed(pitch_idx) * phi).sum(dim=1)
        logit = logit + (self.h_proj(h) * phi).sum(dim=1)
        return logit


class ConvTrunk(nn.Module):
    """Conv->pool stack used by the extractor and the classifiers.

    pooling="global" downsamples both axes and averages everything out, so
    the output is invariant to translation along the mel axis (what the
    pitch-invariant extractor wants).  pooling="time" downsamples frames
    only and keeps every frequency row: pitch classes sit a fraction of a
    mel bin apart at desk resolution, so any frequency pooling erases them.
    """

    def __init__(self, channels: list[int], pooling: str = "global", canvas: int | None = None):
        super().__init__()
        if pooling not in ("global", "time"):
            raise ValueError(f"unknown pooling {pooling!r}")
        if pooling == "time" and canvas is None:
            raise ValueError("time pooling needs the canvas size")
        convs = []
        prev = 1
        for ch in channels:
            convs.append(EqualizedConv2d(prev, ch, 3))
            prev = ch
        self.convs = nn.ModuleList(convs)
        self.pooling = pooling
        self.out_features = prev if pooling == "global" else prev * canvas

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(1)
        kernel = 2 if self.pooling == "global" else (1, 2)
        for conv in self.convs:
            x = F.avg_pool2d(F.leaky_relu(conv(x), 0.2), kernel)
        if self.pooling == "global":
            return x.mean(dim=(2, 3))
        return x.mean(dim=3).flatten(1)


class FeatureExtractor(nn.Module):
    """Pitch-invariant timbre encoder; output is always unit L2 norm."""

    def __init__(self, channels: list[int], feat_dim: int, n_families: int):
        super().__init__()
        self.trunk = ConvTrunk(channels, pooling="global")
        self.head = EqualizedLinear(self.trunk.out_features, feat_dim)
        self.family_head = EqualizedLinear(feat_dim, n_families)  # training-time head
        self.feat_dim = feat_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return normalize_features(self.head(self.trunk(x)))

    def family_logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.family_head(self.forward(x))


class MelClassifier(nn.Module):
    """Small conv classifier exposing its penultimate feature layer."""

    def __init__(self, channels: list[int], feat_dim: int, n_classes: int, canvas: int):
        super().__init__()
        self.trunk = ConvTrunk(channels, pooling="time", canvas=canvas)
        self.feature_layer = EqualizedLinear(self.trunk.out_features, feat_dim)
        self.logit_layer = EqualizedLinear(feat_dim, n_classes)
        self.feat_dim = feat_dim
        self.n_classes = n_classes

    def forward(self, x: torch.Tensor) -> ClassifierOutput:
        feat = F.leaky_relu(self.feature_layer(self.trunk(x)), 0.2)
        return ClassifierOutput(logits=self.logit_layer(feat), feature=feat)


# --- builders -----------------------------------------------------------------


def _check_square(cfg: RunConfig) -> int:
    mel = cfg.mel
    if mel.mel_bins != mel.frames:
        raise ValueError(f"generator needs a square canvas, got {mel.mel_bins}x{mel.frames}")
    return mel.mel_bins


def build_generator(cfg: RunConfig, seed: int | None = None) -> Generator:
    torch.manual_seed(derive_seed(cfg.seed if seed is None else seed, "generator"))
    return Generator(
        feat_dim=cfg.model("feat_dim"),
        z_dim=cfg.model("z_dim"),
        w_dim=cfg.model("w_dim"),
        pitch_embed_dim=cfg.model("pitch_embed_dim"),
        channels=cfg.channels(),
        base_res=cfg.model("base_res"),
        canvas=_check_square(cfg),
        mapping_layers=cfg.model("mapping_layers"),
    )


def build_discriminator(cfg: RunConfig, seed: int | None = None) -> Discriminator:
    torch.manual_seed(derive_seed(cfg.seed if seed is None else seed, "discriminator"))
    return Discriminator(
        feat_dim=cfg.model("feat_dim"),
        channels=cfg.disc_channels(),
        base_res=cfg.model("base_res"),
        canvas=_check_square(cfg),
    )


def build_extractor(cfg: RunConfig, n_families: int, seed: int | None = None) -> FeatureExtractor:
    torch.manual_seed(derive_seed(cfg.seed if seed is None else seed, "extractor"))
    return FeatureExtractor(cfg.model("extractor_channels"), cfg.model("feat_dim"), n_families)


def build_classifier(cfg: RunConfig, n_classes: int, tag: str, seed: int | None = None) -> MelClassifier:
    torch.manual_seed(derive_seed(cfg.seed if seed is None else seed, f"classifier:{tag}"))
    return MelClassifier(cfg.model("classifier_channels"), cfg.model("classifier_feat_dim"),
                         n_classes, canvas=cfg.mel.mel_bins)


# --- functional helpers ---------------------------------------------------------


def extract_features(extractor: FeatureExtractor, mels) -> torch.Tensor:
    """Unit-norm timbre features for a (B, bins, frames) batch or single grid."""
    x = torch.as_tensor(np.asarray(mels) if not torch.is_tensor(mels) else mels)
    x = x.to(next(extractor.parameters()).dtype)
    single = x.dim() == 2
    if single:
        x = x.unsqueeze(0)
    with torch.no_grad():
        h = extractor(x)
    return h[0] if single else h


def generator_params(gen: Generator) -> dict[str, torch.Tensor]:
    """Detached copy of the generator's named parameter table."""
    return {name: p.detach().clone() for name, p in gen.named_parameters()}


def generate(gen: Generator, h: torch.Tensor, z: torch.Tensor, pitch_idx: torch.Tensor,
             params: dict[str, torch.Tensor] | None = None,
             offsets: dict[str, torch.Tensor] | None = None) -> torch.Tensor:
    """Forward pass, optionally with an explicit parameter table."""
    if params is None:
        return gen(h, z, pitch_idx, offsets=offsets)
    return torch.func.functional_call(gen, params, (h, z, pitch_idx), {"offsets": offsets})


def count_params(component: nn.Module) -> int:
    """Exact parameter count (buffers excluded; freezing does not change it)."""
    return sum(p.numel() for p in component.parameters())


def state_to_numpy(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_numpy_state(module: nn.Module, arrays: dict[str, np.ndarray]) -> None:
    target_dtype = next(module.parameters()).dtype
    state = {k: torch.from_numpy(np.ascontiguousarray(v)).to(target_dtype) if v.dtype.kind == "f"
             else torch.from_numpy(np.ascontiguousarray(v))
             for k, v in arrays.items()}
    module.load_state_dict(state)
