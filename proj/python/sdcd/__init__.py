"""Structure-disrupted contrastive decoding: patch-shuffled negative views,
contrastive logit calibration, and POPE/CHAIR scoring."""

from ._core import (
    CAPTION_PROMPT,
    SdcdError,
    SyntheticBackend,
    calibrate,
    chair_score,
    make_permutation,
    parse_binary_answer,
    plausibility_mask,
    pope_score,
    probe_prompt,
    shuffle_patches,
    softmax,
    synthetic_dataset,
    unshuffle_patches,
)

__all__ = [
    "CAPTION_PROMPT",
    "SdcdError",
    "SyntheticBackend",
    "calibrate",
    "chair_score",
    "make_permutation",
    "parse_binary_answer",
    "plausibility_mask",
    "pope_score",
    "probe_prompt",
    "shuffle_patches",
    "softmax",
    "synthetic_dataset",
    "unshuffle_patches",
]
