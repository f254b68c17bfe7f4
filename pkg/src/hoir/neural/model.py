"""Configurations, the seven architecture wirings and the training loss."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .layers import Encoder, FusionEncoder, Head, Module
from .tensor import Tensor

ARCHITECTURES = ("full", "single_mlp", "single_trans", "single_all", "no_trans", "concat_trans", "concat_no_trans")
UNION_ARCHS = ("single_mlp", "single_all")          # one occupancy for human and object together
THREE_TOKEN_ARCHS = ("single_trans", "single_all")
IMAGE_CHANNELS = {"I_f": 5, "I_h": 5, "I_o": 5, "S_N": 3}
PRIOR_DIM = 3


class InvalidConfigError(ValueError):
    pass


@dataclass
class EncoderConfig:
    stacks: int = 1
    out_channels: int = 32
    downsample: int = 4
    hidden: int = 32
    depth: int = 2

    def validate(self):
        if self.stacks < 1 or self.out_channels < 1 or self.hidden < 1 or self.depth < 1:
            raise InvalidConfigError("encoder stacks, depth and channel counts must be >= 1")
        if self.downsample < 1 or self.downsample & (self.downsample - 1):
            raise InvalidConfigError("encoder downsample must be a power of two")
        return self


@dataclass
class FusionConfig:
    heads: int = 5
    d_k: int = 7
    prior_in_tokens: bool = True
    ffn_mult: int = 2

    def validate(self):
        if self.heads < 1 or self.d_k < 1:
            raise InvalidConfigError("heads and d_k must be >= 1")
        return self


@dataclass
class HeadConfig:
    widths: tuple = (35, 128, 64, 32, 16, 1)
    skip_layers: tuple = (2, 3, 4)

    def validate(self):
        if len(self.widths) < 2 or self.widths[-1] != 1:
            raise InvalidConfigError("head widths need at least two entries and must end in 1")
        return self


@dataclass
class AblationConfig:
    architecture: str = "full"
    use_Sn: bool = True
    use_prior: bool = True
    use_If: bool = True
    use_Ih: bool = True
    use_Io: bool = True

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidConfigError(f"unknown architecture {self.architecture!r}; expected one of {ARCHITECTURES}")
        if not (self.use_If or self.use_Ih or self.use_Io):
            raise InvalidConfigError("at least one of use_If / use_Ih / use_Io must be set")
        if self.use_Sn and not self.use_Ih:
            raise InvalidConfigError("use_Sn needs use_Ih (the normal map is stacked onto I_h)")
        if self.architecture.startswith("concat") and not self.use_If:
            raise InvalidConfigError(f"{self.architecture} concatenates I_f and needs use_If")
        return self

    @property
    def union(self):
        return self.architecture in UNION_ARCHS


def legal_ablations():
    """Every valid architecture x input-flag combination."""
    out = []
    for arch in ARCHITECTURES:
        for bits in range(32):
            flags = dict(use_Sn=bool(bits & 1), use_prior=bool(bits & 2), use_If=bool(bits & 4),
                         use_Ih=bool(bits & 8), use_Io=bool(bits & 16))
            cfg = AblationConfig(arch, **flags)
            try:
                cfg.validate()
            except InvalidConfigError:
                continue
            out.append(cfg)
    return out


@dataclass
class ModelConfig:
    ablation: AblationConfig = field(default_factory=AblationConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    # multiplies the (signed distance, visibility, relative depth) prior
    # inputs; signed distances near the surface are otherwise tiny
    prior_scale: tuple = (50.0, 1.0, 1.0)

    def validate(self):
        for c in (self.ablation, self.encoder, self.fusion, self.head):
            c.validate()
        if len(self.prior_scale) != PRIOR_DIM or not all(np.isfinite(self.prior_scale)):
            raise InvalidConfigError(f"prior_scale needs {PRIOR_DIM} finite factors")
        F = self.encoder.out_channels
        if self.head.widths[0] != F + PRIOR_DIM:
            raise InvalidConfigError(f"head widths[0] must be feature dim + {PRIOR_DIM} = {F + PRIOR_DIM}")
        arch = self.ablation.architecture
        if not self.fusion.prior_in_tokens and arch in ("single_trans", "single_all", "concat_trans"):
            raise InvalidConfigError(f"{arch} mixes entities in one token sequence and needs prior_in_tokens")
        width = self.token_width()
        if self.fusion.heads * self.fusion.d_k != width:
            raise InvalidConfigError(f"heads * d_k must equal the token width {width}")
        return self

    def token_width(self):
        return self.encoder.out_channels + (PRIOR_DIM if self.fusion.prior_in_tokens else 0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        h = dict(d["head"])
        h["widths"] = tuple(h["widths"])
        h["skip_layers"] = tuple(h["skip_layers"])
        extra = {"prior_scale": tuple(d["prior_scale"])} if "prior_scale" in d else {}
        return cls(AblationConfig(**d["ablation"]), EncoderConfig(**d["encoder"]),
                   FusionConfig(**d["fusion"]), HeadConfig(**h), **extra)


@dataclass
class PointInputs:
    """Per-view query points of one set: projected pixel coords and both priors."""
    uv: np.ndarray                  # (N, 2) image coordinates
    prior_h: np.ndarray             # (N, 3)
    prior_o: np.ndarray             # (N, 3)

    def __len__(self):
        return len(self.uv)


class Model(Module):
    """Image encoders, fusion encoders and occupancy heads wired per architecture."""

    def __init__(self, cfg, seed=0, dtype=np.float32):
        super().__init__()
        self.cfg = cfg.validate()
        self.dtype = np.dtype(dtype)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        a = cfg.ablation
        arch = a.architecture
        F = cfg.encoder.out_channels
        self.sources = self._sources(a)
        self.encoders = {r: self.child(f"enc_{r}", Encoder(sum(IMAGE_CHANNELS[s] for s in srcs), cfg.encoder, rng, dtype))
                         for r, srcs in self.sources.items()}
        fc, tw = cfg.fusion, cfg.token_width()
        hidden = cfg.head.widths[1:]
        skips = cfg.head.skip_layers
        self.fusers, self.heads = {}, {}
        if arch in ("full", "single_mlp"):
            for e in "ho":
                self.fusers[e] = self.child(f"fuse_{e}", FusionEncoder(tw, fc.heads, fc.d_k, rng, dtype, fc.ffn_mult))
        elif arch in ("single_trans", "single_all", "concat_trans"):
            self.fusers["joint"] = self.child("fuse", FusionEncoder(tw, fc.heads, fc.d_k, rng, dtype, fc.ffn_mult))
        d_in = {"no_trans": 2 * F + PRIOR_DIM, "single_mlp": 2 * (F + PRIOR_DIM)}.get(arch, F + PRIOR_DIM)
        if a.union:
            self.heads["joint"] = self.child("head", Head((d_in,) + hidden, skips, rng, dtype))
        else:
            for e in "ho":
                self.heads[e] = self.child(f"head_{e}", Head((d_in,) + hidden, skips, rng, dtype))

    @staticmethod
    def _sources(a):
        human = (["I_h"] + (["S_N"] if a.use_Sn else [])) if a.use_Ih else []
        obj = ["I_o"] if a.use_Io else []
        if a.architecture.startswith("concat"):
            return {"h": ["I_f"] + human, "o": ["I_f"] + obj}
        out = {}
        if human:
            out["h"] = human
        if obj:
            out["o"] = obj
        if a.use_If:
            out["f"] = ["I_f"]
        return out

    # -- images -----------------------------------------------------------------------
    def stack_inputs(self, images):
        """images: list (batch) of dicts name -> (C, H, W).  Returns role -> (B, C, H, W)."""
        return {r: np.stack([np.concatenate([img[s] for s in srcs]) for img in images]).astype(self.dtype)
                for r, srcs in self.sources.items()}

    def encode(self, stacked):
        return {r: self.encoders[r](Tensor(x)) for r, x in stacked.items()}

    # -- points -------------------------------------------------------------------------
    def _pixel_features(self, fmap, uv, size):
        H, W = size
        s = self.cfg.encoder.downsample
        u, v = uv[:, 0], uv[:, 1]
        valid = (u >= 0) & (u < W) & (v >= 0) & (v < H)
        return T.bilinear_sample(fmap, u / s - 0.5, v / s - 0.5, valid)

    def _prior(self, p):
        if not self.cfg.ablation.use_prior:
            return Tensor(np.zeros(np.shape(p), dtype=self.dtype))
        return Tensor(np.asarray(p * np.asarray(self.cfg.prior_scale), dtype=self.dtype))

    def predict(self, feats, b, pts, query, image_size):
        """Occupancy (N,) for points ``pts`` of view ``b``.

        ``query`` is "h" or "o" for the entity heads; union architectures
        ignore it and return the joint occupancy.
        """
        arch = self.cfg.ablation.architecture
        cache = {}

        def phi(role):
            if role not in cache:
                cache[role] = self._pixel_features(feats[role][b], pts.uv, image_size)
            return cache[role]

        sig = {"h": self._prior(pts.prior_h), "o": self._prior(pts.prior_o)}
        in_tokens = self.cfg.fusion.prior_in_tokens

        def tok(feat, prior):
            return T.concat([feat, prior], axis=-1) if in_tokens else feat

        def pair_feature(e):
            loc, glob = self._pair_roles(e)
            if arch == "no_trans":
                return T.concat([phi(loc), phi(glob), sig[e]], axis=-1)
            fused = self.fusers[e](T.stack_tokens([tok(phi(loc), sig[e]), tok(phi(glob), sig[e])]))
            return fused if in_tokens else T.concat([fused, sig[e]], axis=-1)

        if arch in ("full", "no_trans"):
            return self.heads[query](pair_feature(query))
        if arch == "single_mlp":
            return self.heads["joint"](T.concat([pair_feature("h"), pair_feature("o")], axis=-1))
        if arch == "concat_no_trans":
            return self.heads[query](T.concat([phi(query), sig[query]], axis=-1))
        if arch == "concat_trans":
            fused = self.fusers["joint"](T.stack_tokens([tok(phi("h"), sig["h"]), tok(phi("o"), sig["o"])]))
            return self.heads[query](fused)
        # three-token layouts: the image token carries no prior
        zero = Tensor(np.zeros((len(pts), 3), self.dtype))
        tokens = [tok(phi(r), sig.get(r, zero)) for r in ("h", "o", "f") if r in self.sources]
        fused = self.fusers["joint"](T.stack_tokens(tokens))
        return self.heads["joint" if arch == "single_all" else query](fused)

    def _pair_roles(self, e):
        other = "o" if e == "h" else "h"
        have = self.sources
        local = e if e in have else ("f" if "f" in have else other)
        glob = "f" if "f" in have else (other if other in have else e)
        return local, glob


def build_model(ablation=None, encoder=None, fusion=None, head=None, seed=0, dtype=np.float32,
                prior_scale=None):
    cfg = ModelConfig(ablation or AblationConfig(), encoder or EncoderConfig(),
                      fusion or FusionConfig(), head or HeadConfig())
    if prior_scale is not None:
        cfg.prior_scale = tuple(float(x) for x in prior_scale)
    return Model(cfg, seed, dtype)


def loss(pred_h, label_h, pred_o, label_o):
    """(L, L_h, L_o) with each term the mean squared error of its set."""
    L_h = T.mse(pred_h, label_h)
    L_o = T.mse(pred_o, label_o)
    return L_h + L_o, L_h, L_o
