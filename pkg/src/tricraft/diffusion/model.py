"""The toy latent video denoiser.

Camera renderings enter as channel-concatenated latents, object motion as
additive multi-scale features in the encoder, and lighting through a
dedicated cross-attention branch that is summed with image and text
cross-attention (Q taken from the self-attention output). Temporal
attention mixes the frame axis at each site and lives in its own
parameter namespace (`unet.temporal.*`) so the stage scheduler can freeze
it by glob.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from .. import tensor as T
from ..motion import ObjMotionNet
from ..tensor import Tensor
from .codec import PATCH, latent_decode, latent_encode, latent_shape
from .conditioning import ConditionBundle
from .schedule import NoiseSchedule

__all__ = ["ModelConfig", "ControlDiffusionModel", "LightMLP", "SpatialTripleBlock",
           "TemporalAttention", "timestep_embedding"]


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 25
    video_height: int = 32
    video_width: int = 64
    stage_widths: tuple = (32, 64, 96, 128)
    d_model: int = 128
    d_cond: int = 64
    text_vocab: int = 16
    groups: int = 8
    temb_dim: int = 128
    seed: int = 0
    timesteps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 2e-2
    cfg_per_branch: bool = False  # classifier-free dropout: per-sample choice by default
    flow_gain: float = 48.0  # scales the pooled flow so conv inputs are O(1)

    def __post_init__(self):
        if self.stage_widths[-1] != self.d_model:
            raise ValueError("d_model must equal the deepest stage width")
        if self.video_height % (PATCH * 8) or self.video_width % (PATCH * 8):
            raise ValueError("video extents must be divisible by patch*8")

    @property
    def latent_channels(self):
        return 3 * PATCH * PATCH

    @property
    def latent_hw(self):
        return (self.video_height // PATCH, self.video_width // PATCH)

    def to_json(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["stage_widths"] = list(self.stage_widths)
        return d

    @staticmethod
    def from_json(obj):
        obj = dict(obj)
        obj["stage_widths"] = tuple(obj["stage_widths"])
        return ModelConfig(**obj)


def timestep_embedding(t, dim, max_period=10000.0):
    """Sinusoidal embedding of a scalar diffusion timestep."""
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    ang = t * freqs
    return np.concatenate([np.cos(ang), np.sin(ang)]).astype(np.float32)


class ResBlock(nn.Module):
    """Residual conv block; the second norm's gamma starts at zero so the
    block is an identity at init and the UNet trains from a clean trunk."""

    def __init__(self, rng, c_in, c_out, temb_dim, groups):
        self.norm1 = nn.GroupNorm(min(groups, c_in), c_in)
        self.conv1 = nn.Conv2d(rng, c_in, c_out)
        self.temb = nn.Linear(rng, temb_dim, c_out)
        self.norm2 = nn.GroupNorm(min(groups, c_out), c_out)
        self.norm2.gamma.tensor.data[:] = 0.0
        self.conv2 = nn.Conv2d(rng, c_out, c_out)
        self.skip = nn.Conv2d(rng, c_in, c_out, kernel=1) if c_in != c_out else None

    def __call__(self, x, temb):
        h = self.conv1(T.silu(self.norm1(x)))
        tb = self.temb(T.silu(temb))
        h = T.add(h, T.reshape(tb, (1, -1, 1, 1)))
        h = self.conv2(T.silu(self.norm2(h)))
        s = self.skip(x) if self.skip is not None else x
        return T.add(h, s)


class CrossAttention(nn.Module):
    """Single-head cross-attention; V and output projections are bias-free
    so zeroed token sets contribute exactly nothing. Output projections
    default to zero init (attention residuals start as identity); branches
    whose tokens are themselves zero at init must pass zero_out=False or
    the two zeros deadlock and the branch can never receive gradient."""

    def __init__(self, rng, d_q, d_kv, zero_out=True):
        self.wq = nn.Linear(rng, d_q, d_q, bias=False)
        self.wk = nn.Linear(rng, d_kv, d_q, bias=False)
        self.wv = nn.Linear(rng, d_kv, d_q, bias=False)
        self.wo = nn.Linear(rng, d_q, d_q, bias=False, zero_init=zero_out)

    def __call__(self, x, tokens):
        q = self.wq(x)
        k = self.wk(tokens)
        v = self.wv(tokens)
        return self.wo(T.attention(q, k, v))


class SpatialTripleBlock(nn.Module):
    """Self-attention, then parallel image/text/lighting cross-attention
    whose outputs are summed, then a feed-forward block."""

    def __init__(self, rng, width, d_cond, n_tokens):
        self.pos = nn.Parameter((rng.standard_normal((n_tokens, width)) * 0.02).astype(np.float32))
        self.norm_self = nn.LayerNorm(width)
        self.self_attn = CrossAttention(rng, width, width)
        self.norm_cross = nn.LayerNorm(width)
        self.cross_image = CrossAttention(rng, width, d_cond)
        self.cross_text = CrossAttention(rng, width, d_cond)
        # light tokens start at zero (zero-init light MLP), so this branch's
        # output projection must not also start at zero
        self.cross_light = CrossAttention(rng, width, d_cond, zero_out=False)
        self.norm_ffn = nn.LayerNorm(width)
        self.ffn1 = nn.Linear(rng, width, 2 * width)
        self.ffn2 = nn.Linear(rng, 2 * width, width, zero_init=True)

    def triple_cross(self, hq, image_tokens, text_tokens, light_embedding):
        """Sum of the image, text and lighting cross-attention outputs;
        hq is the (normalized) self-attention output, [F, L, C]."""
        f = hq.shape[0]
        o_img = self.cross_image(hq, image_tokens)
        o_txt = self.cross_text(hq, text_tokens)
        light = T.reshape(light_embedding, (f, 1, -1))
        o_light = self.cross_light(hq, light)
        return T.add(T.add(o_img, o_txt), o_light)

    def __call__(self, x, cond):
        f, c, h, w = x.shape
        tokens = T.permute(T.reshape(x, (f, c, h * w)), (0, 2, 1))
        tokens = T.add(tokens, self.pos.tensor)

        hs = self.norm_self(tokens)
        x1 = T.add(tokens, self.self_attn(hs, hs))

        hq = self.norm_cross(x1)
        x2 = T.add(x1, self.triple_cross(hq, cond.image_tokens, cond.text_tokens,
                                         cond.light_embedding))

        x3 = T.add(x2, self.ffn2(T.silu(self.ffn1(self.norm_ffn(x2)))))
        return T.reshape(T.permute(x3, (0, 2, 1)), (f, c, h, w))


class TemporalAttention(nn.Module):
    """Self-attention over the frame axis at every spatial location."""

    def __init__(self, rng, width, n_frames):
        self.pos = nn.Parameter((rng.standard_normal((n_frames, width)) * 0.02).astype(np.float32))
        self.norm = nn.LayerNorm(width)
        self.attn = CrossAttention(rng, width, width)

    def __call__(self, x):
        f, c, h, w = x.shape
        tok = T.permute(T.reshape(x, (f, c, h * w)), (2, 0, 1))  # [L,F,C]
        tok = T.add(tok, self.pos.tensor)
        hn = self.norm(tok)
        out = T.add(tok, self.attn(hn, hn))
        return T.reshape(T.permute(out, (1, 2, 0)), (f, c, h, w))


class EncStage(nn.Module):
    def __init__(self, rng, c_in, c_out, temb_dim, groups, d_cond=None, n_tokens=None):
        self.res = ResBlock(rng, c_in, c_out, temb_dim, groups)
        self.attn = SpatialTripleBlock(rng, c_out, d_cond, n_tokens) if d_cond else None


class SpatialNet(nn.Module):
    """All non-temporal UNet parameters (conv path, triple attention, output)."""

    def __init__(self, rng, cfg):
        w1, w2, w3, w4 = cfg.stage_widths
        lh, lw = cfg.latent_hw
        cz = cfg.latent_channels
        g = cfg.groups
        td = cfg.temb_dim
        dc = cfg.d_cond

        self.temb1 = nn.Linear(rng, td, td)
        self.temb2 = nn.Linear(rng, td, td)

        self.conv_in = nn.Conv2d(rng, 2 * cz, w1)
        self.enc1 = EncStage(rng, w1, w1, td, g)
        self.down1 = nn.Conv2d(rng, w1, w2, stride=2)
        self.enc2 = EncStage(rng, w2, w2, td, g, dc, (lh // 2) * (lw // 2))
        self.down2 = nn.Conv2d(rng, w2, w3, stride=2)
        self.enc3 = EncStage(rng, w3, w3, td, g, dc, (lh // 4) * (lw // 4))
        self.down3 = nn.Conv2d(rng, w3, w4, stride=2)
        self.enc4 = EncStage(rng, w4, w4, td, g, dc, (lh // 8) * (lw // 8))

        self.mid_res1 = ResBlock(rng, w4, w4, td, g)
        self.mid_attn = SpatialTripleBlock(rng, w4, dc, (lh // 8) * (lw // 8))
        self.mid_res2 = ResBlock(rng, w4, w4, td, g)

        self.dec4 = EncStage(rng, 2 * w4, w4, td, g, dc, (lh // 8) * (lw // 8))
        self.up3 = nn.Conv2d(rng, w4, w3)
        self.dec3 = EncStage(rng, 2 * w3, w3, td, g, dc, (lh // 4) * (lw // 4))
        self.up2 = nn.Conv2d(rng, w3, w2)
        self.dec2 = EncStage(rng, 2 * w2, w2, td, g, dc, (lh // 2) * (lw // 2))
        self.up1 = nn.Conv2d(rng, w2, w1)
        self.dec1 = EncStage(rng, 2 * w1, w1, td, g)

        self.out_norm = nn.GroupNorm(min(g, w1), w1)
        self.out_conv = nn.Conv2d(rng, w1, cz)
        # direct linear readout from the (concatenated) input: lets the
        # denoiser capture the dominant eps-in-z_t component from step one,
        # which the deep trunk alone cannot reach at desk-scale budgets
        self.res_skip = nn.Conv2d(rng, 2 * cz, cz, kernel=1, bias=False)


class TemporalNet(nn.Module):
    """All temporal-attention parameters, one module per site."""

    def __init__(self, rng, cfg):
        _, w2, w3, w4 = cfg.stage_widths
        f = cfg.frames
        self.enc2 = TemporalAttention(rng, w2, f)
        self.enc3 = TemporalAttention(rng, w3, f)
        self.enc4 = TemporalAttention(rng, w4, f)
        self.mid = TemporalAttention(rng, w4, f)
        self.dec4 = TemporalAttention(rng, w4, f)
        self.dec3 = TemporalAttention(rng, w3, f)
        self.dec2 = TemporalAttention(rng, w2, f)


class UNet(nn.Module):
    def __init__(self, rng, cfg):
        self.spatial = SpatialNet(rng, cfg)
        self.temporal = TemporalNet(rng, cfg)

    def __call__(self, x, temb_raw, cond):
        sp, tm = self.spatial, self.temporal
        temb = sp.temb2(T.silu(sp.temb1(temb_raw)))
        motion = cond.motion_features

        def enc_stage(block, tattn, h, inject_idx):
            h = block.res(h, temb)
            if motion is not None:
                h = T.add(h, motion[inject_idx])
            if block.attn is not None:
                h = block.attn(h, cond)
            if tattn is not None:
                h = tattn(h)
            return h

        def dec_stage(block, tattn, h, skip):
            h = block.res(T.concat([h, skip], axis=1), temb)
            if block.attn is not None:
                h = block.attn(h, cond)
            if tattn is not None:
                h = tattn(h)
            return h

        h = sp.conv_in(x)
        s1 = enc_stage(sp.enc1, None, h, 0)
        s2 = enc_stage(sp.enc2, tm.enc2, sp.down1(s1), 1)
        s3 = enc_stage(sp.enc3, tm.enc3, sp.down2(s2), 2)
        s4 = enc_stage(sp.enc4, tm.enc4, sp.down3(s3), 3)

        h = sp.mid_res1(s4, temb)
        h = sp.mid_attn(h, cond)
        h = tm.mid(h)
        h = sp.mid_res2(h, temb)

        h = dec_stage(sp.dec4, tm.dec4, h, s4)
        h = dec_stage(sp.dec3, tm.dec3, sp.up3(T.upsample2x(h)), s3)
        h = dec_stage(sp.dec2, tm.dec2, sp.up2(T.upsample2x(h)), s2)
        h = dec_stage(sp.dec1, None, sp.up1(T.upsample2x(h)), s1)

        return T.add(sp.out_conv(T.silu(sp.out_norm(h))), sp.res_skip(x))


class LightMLP(nn.Module):
    """16 SH coefficients -> d_cond tokens; final layer starts at zero so an
    untrained lighting branch is exactly inert."""

    def __init__(self, rng, d_cond):
        self.fc1 = nn.Linear(rng, 16, 64)
        self.fc2 = nn.Linear(rng, 64, d_cond, zero_init=True)

    def __call__(self, sh):
        x = sh if isinstance(sh, Tensor) else Tensor(np.asarray(sh, dtype=np.float32))
        if x.shape[-1] != 16:
            raise ValueError(f"light MLP expects 16 SH coefficients, got {x.shape[-1]}")
        return self.fc2(T.silu(self.fc1(x)))


class ImageEmbedder(nn.Module):
    """Patch projection of the reference image into condition tokens
    (frozen stand-in for a pretrained image encoder)."""

    def __init__(self, rng, cfg):
        self.cfg = cfg
        self.proj = nn.Linear(rng, cfg.latent_channels, cfg.d_cond)

    def __call__(self, ref_image):
        img = np.asarray(ref_image, dtype=np.float32)  # (H,W,3) in [0,1]
        z = latent_encode(img.transpose(2, 0, 1)[None] * 2.0 - 1.0)[0]  # (Cz,h,w)
        cz, h, w = z.shape
        patches = Tensor(np.ascontiguousarray(z.reshape(cz, h * w).T))
        tok = self.proj(patches)  # (h*w, d)
        grid = T.reshape(tok, (h // 2, 2, w // 2, 2, -1))
        pooled = T.mean(grid, axis=(1, 3))
        return T.reshape(pooled, ((h // 2) * (w // 2), -1))


class TextEmbedder(nn.Module):
    """Caption token table (frozen stand-in for a pretrained text encoder)."""

    def __init__(self, rng, cfg):
        self.table = nn.Embedding(rng, cfg.text_vocab, cfg.d_cond)

    def __call__(self, token_ids):
        ids = np.atleast_1d(np.asarray(token_ids, dtype=np.int64))
        return self.table(ids)


class Embedders(nn.Module):
    def __init__(self, rng, cfg):
        self.image = ImageEmbedder(rng, cfg)
        self.text = TextEmbedder(rng, cfg)


class ControlDiffusionModel(nn.Module):
    """Denoiser plus conditioning encoders, schedule, and codec plumbing."""

    def __init__(self, config=None):
        cfg = config or ModelConfig()
        rng = np.random.default_rng(cfg.seed)
        self.config = cfg
        self.schedule = NoiseSchedule(cfg.timesteps, cfg.beta_start, cfg.beta_end)
        self.embed = Embedders(rng, cfg)
        self.light_mlp = LightMLP(rng, cfg.d_cond)
        self.motion = ObjMotionNet(rng, channels=cfg.stage_widths)
        self.unet = UNet(rng, cfg)
        # per-channel latent whitening (the latent-diffusion scale factor,
        # per channel): patch-DCT coordinates span ~100x in magnitude, and
        # unit noise would otherwise drown all spatial detail
        self.latent_mu = np.zeros(cfg.latent_channels, dtype=np.float32)
        self.latent_sigma = np.ones(cfg.latent_channels, dtype=np.float32)
        self.finalize_names()
        for _, p in self.embed.named_parameters("embed"):
            p.set_trainable(False)

    # nn.Module.named_parameters walks all attributes; schedule/config have none.
    def named_parameters(self, prefix=""):
        out = []
        for key in ("embed", "light_mlp", "motion", "unet"):
            out.extend(getattr(self, key).named_parameters(f"{prefix}.{key}" if prefix else key))
        return out

    def encode_video(self, video):
        z = latent_encode(np.asarray(video, dtype=np.float32) * 2.0 - 1.0)
        mu = self.latent_mu[None, :, None, None]
        sigma = self.latent_sigma[None, :, None, None]
        return ((z - mu) / sigma).astype(np.float32)

    def decode_video(self, z):
        mu = self.latent_mu[None, :, None, None]
        sigma = self.latent_sigma[None, :, None, None]
        raw = np.asarray(z, dtype=np.float32) * sigma + mu
        return (latent_decode(raw) + 1.0) * 0.5

    def set_latent_stats(self, mu, sigma):
        mu = np.asarray(mu, dtype=np.float32).reshape(self.config.latent_channels)
        sigma = np.asarray(sigma, dtype=np.float32).reshape(self.config.latent_channels)
        floor = 0.05 * float(sigma.max())
        self.latent_mu = mu
        self.latent_sigma = np.maximum(sigma, max(floor, 1e-4))

    def has_latent_stats(self):
        return not (np.all(self.latent_mu == 0) and np.all(self.latent_sigma == 1))

    def calibrate_latent_stats(self, videos):
        """Fit the per-channel whitening to a batch of (F,3,H,W) videos."""
        zs = [latent_encode(np.asarray(v, dtype=np.float32) * 2.0 - 1.0) for v in videos]
        z = np.concatenate(zs, axis=0)
        self.set_latent_stats(z.mean(axis=(0, 2, 3)), z.std(axis=(0, 2, 3)))

    def unet_forward(self, x, t, cond):
        """x: (F, 2*Cz, h, w) latents with camera latents concatenated."""
        f, c2, h, w = x.shape
        cz = self.config.latent_channels
        if c2 != 2 * cz:
            raise ValueError(f"expected {2 * cz} channels after camera concat, got {c2}")
        if f != self.config.frames:
            raise ValueError(f"model is built for F={self.config.frames}, got {f}")
        temb = Tensor(timestep_embedding(float(t), self.config.temb_dim))
        xt = x if isinstance(x, Tensor) else Tensor(x)
        return self.unet(xt, temb, cond)

    def predict_eps(self, z_t, t, bundle):
        """eps prediction for a fully substituted bundle."""
        zt = z_t if isinstance(z_t, Tensor) else Tensor(np.asarray(z_t, dtype=np.float32))
        x = T.concat([zt, bundle.cam_latents], axis=1)
        return self.unet_forward(x, t, bundle)

    def null_shapes(self):
        """Shapes used to materialize null branches that were never populated."""
        cfg = self.config
        lh, lw = cfg.latent_hw
        n_img = (lh // 2) * (lw // 2)
        return {
            "object": [(cfg.frames, c, lh >> s, lw >> s)
                       for s, c in enumerate(cfg.stage_widths)],
            "light": (cfg.frames, cfg.d_cond),
            "text": (1, cfg.d_cond),
            "image": (n_img, cfg.d_cond),
        }

    def build_bundle(self, ref_image, text_ids, renders=None, flow=None, light=None):
        """Assemble a ConditionBundle from raw controls.

        renders: (F,H,W,3) array or list of RenderedFrame; flow: video-res
        FlowField; light: LightSpec. Omitted controls get null_mask flags
        and are materialized later by substitute_nulls.
        """
        from ..lighting import encode_light_sequence
        from ..motion import FlowField, downsample_field

        cfg = self.config
        ref = np.asarray(ref_image, dtype=np.float32)
        bundle = ConditionBundle(
            image_tokens=self.embed.image(ref),
            ref_latent=self.encode_video(ref.transpose(2, 0, 1)[None])[0],
        )
        if text_ids is not None:
            bundle.text_tokens = self.embed.text(text_ids)
        else:
            bundle.null_mask["text"] = True
        if renders is not None:
            frames = np.stack([np.asarray(getattr(r, "image", r), dtype=np.float32)
                               for r in renders])
            if frames.shape[0] != cfg.frames:
                raise ValueError(f"expected {cfg.frames} renders, got {frames.shape[0]}")
            bundle.cam_latents = Tensor(self.encode_video(frames.transpose(0, 3, 1, 2)))
        else:
            bundle.null_mask["camera"] = True
        if flow is not None:
            if not isinstance(flow, FlowField):
                flow = FlowField(flow)
            pooled = downsample_field(flow, PATCH)
            pooled = FlowField(pooled.values * np.float32(cfg.flow_gain))
            bundle.motion_features = self.motion(pooled)
        else:
            bundle.null_mask["object"] = True
        if light is not None:
            sh = encode_light_sequence(light)
            if sh.shape[0] != cfg.frames:
                raise ValueError(f"expected {cfg.frames} light directions, got {sh.shape[0]}")
            bundle.light_embedding = self.light_mlp(sh)
        else:
            bundle.null_mask["light"] = True
        return bundle
