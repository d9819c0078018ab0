"""Condition bundles, classifier-free dropout, and null substitution.

Null signals: a dropped camera branch becomes the reference-image latent
tiled across frames; dropped text/object/light branches become zero
tensors of matching shape (object nulls are interchangeable with running
the bias-free motion encoder on a zero flow field). The image branch is
only ever nulled by classifier-free dropout, never by user omission.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..tensor import Tensor

__all__ = ["ConditionBundle", "BRANCHES", "cfg_dropout", "substitute_nulls", "null_bundle"]

BRANCHES = ("image", "text", "camera", "object", "light")
_DROP_CHOICES = BRANCHES + ("all",)


@dataclass
class ConditionBundle:
    """All conditioning consumed by the denoiser, plus per-branch null flags.

    `null_mask[branch] = True` marks a branch the user omitted; it must be
    materialized by `substitute_nulls` before the bundle reaches the UNet.
    """

    image_tokens: Tensor = None
    text_tokens: Tensor = None
    cam_latents: Tensor = None
    motion_features: list = None
    light_embedding: Tensor = None
    ref_latent: np.ndarray = None  # (Cz,h,w), backs the camera null
    null_mask: dict = field(default_factory=dict)

    def clone_shallow(self):
        return replace(self, null_mask=dict(self.null_mask))

    def is_null(self, branch):
        return bool(self.null_mask.get(branch, False))


def _tiled_ref_latent(bundle, frames):
    if bundle.ref_latent is None:
        raise ValueError("reference latent unavailable for camera null substitution")
    ref = np.asarray(bundle.ref_latent, dtype=np.float32)
    return Tensor(np.tile(ref[None], (frames, 1, 1, 1)))


def _zeros(shape):
    return Tensor(np.zeros(shape, dtype=np.float32))


def _apply_null(bundle, branch, frames, shapes=None):
    """Overwrite one branch with its null signal (in place on `bundle`)."""

    def shape_for(key, current):
        if current is not None:
            return current.shape
        if shapes is None or key not in shapes:
            raise ValueError(f"cannot materialize null {key}: no value and no shape hint")
        return shapes[key]

    if branch == "camera":
        bundle.cam_latents = _tiled_ref_latent(bundle, frames)
    elif branch == "object":
        if bundle.motion_features is not None:
            bundle.motion_features = [_zeros(f.shape) for f in bundle.motion_features]
        elif shapes is not None and "object" in shapes:
            bundle.motion_features = [_zeros(s) for s in shapes["object"]]
        else:
            raise ValueError("cannot materialize null object features: no shape hint")
    elif branch == "light":
        bundle.light_embedding = _zeros(shape_for("light", bundle.light_embedding))
    elif branch == "text":
        bundle.text_tokens = _zeros(shape_for("text", bundle.text_tokens))
    elif branch == "image":
        bundle.image_tokens = _zeros(shape_for("image", bundle.image_tokens))
    else:
        raise ValueError(f"unknown branch {branch!r}")
    bundle.null_mask[branch] = True
    return bundle


def cfg_dropout(bundle, rng, p_uncond=0.05, frames=None, per_branch=False):
    """Classifier-free dropout over a fully populated bundle.

    Default mode: with probability p_uncond pick uniformly among the five
    branches or "all" and null it. `per_branch=True` instead drops each
    branch independently with probability p_uncond.
    """
    for br in BRANCHES:
        if bundle.is_null(br):
            raise ValueError(f"cfg_dropout expects a fully populated bundle; {br} is null")
    frames = frames or bundle.cam_latents.shape[0]
    out = bundle.clone_shallow()
    if per_branch:
        for br in BRANCHES:
            if rng.random() < p_uncond:
                _apply_null(out, br, frames)
        return out
    if rng.random() < p_uncond:
        choice = _DROP_CHOICES[rng.integers(0, len(_DROP_CHOICES))]
        if choice == "all":
            for br in BRANCHES:
                _apply_null(out, br, frames)
        else:
            _apply_null(out, choice, frames)
    return out


def substitute_nulls(bundle, frames, shapes=None):
    """Materialize user-omitted controls per the inference null rules."""
    if bundle.is_null("image"):
        raise ValueError("the image branch is always present at inference")
    out = bundle.clone_shallow()
    for br in ("camera", "object", "light", "text"):
        if out.is_null(br) or _value_of(out, br) is None:
            _apply_null(out, br, frames, shapes)
    for name, val in (("image_tokens", out.image_tokens),
                      ("text_tokens", out.text_tokens),
                      ("cam_latents", out.cam_latents),
                      ("motion_features", out.motion_features),
                      ("light_embedding", out.light_embedding)):
        if val is None:
            raise ValueError(f"{name} still absent after null substitution")
    return out


def _value_of(bundle, branch):
    return {"image": bundle.image_tokens, "text": bundle.text_tokens,
            "camera": bundle.cam_latents, "object": bundle.motion_features,
            "light": bundle.light_embedding}[branch]


def null_bundle(bundle, frames, shapes=None):
    """The fully unconditional bundle used for classifier-free guidance."""
    out = bundle.clone_shallow()
    for br in BRANCHES:
        _apply_null(out, br, frames, shapes)
    return out
