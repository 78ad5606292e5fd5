"""Morphology-cleaned masks and pixel-wise face blending.

Renders a face whose raster mask has an inner hole, closes it, jitters it
with random dilation/erosion, and composites the render over a target frame.
Background pixels of the blend are bit-identical to the target.
"""

from pathlib import Path

import numpy as np

from talkingface import (
    augment_mask,
    blend,
    combine_params,
    default_camera,
    make_synthetic_basis,
    make_synthetic_clip,
    morph_close,
)
from talkingface.formats import write_pgm, write_ppm
from talkingface.synthetic import render_coeffs

out_dir = Path(__file__).parent / "output" / "blending"
out_dir.mkdir(parents=True, exist_ok=True)

basis = make_synthetic_basis(seed=0)
camera = default_camera(size=96)
clip = make_synthetic_clip(seed=4, t_frames=3, basis=basis, camera=camera)

frame_idx = 1
target = clip.frames[frame_idx].astype(np.float64) / 255.0

# swap in a different expression, as the pipeline does with predictions
new_beta = clip.coeffs[frame_idx].beta.copy()
new_beta[0] = 0.9
combined = combine_params(clip.coeffs[frame_idx], new_beta)
render = render_coeffs(basis, combined, camera)

raw = render.face_mask
closed = morph_close(raw, 9)
jittered = augment_mask(raw, np.random.default_rng(0))
print(f"mask pixels: raw {int(raw.sum())}, closed {int(closed.sum())}, "
      f"augmented {int(jittered.sum())}")

blended = blend(render.color, target, closed)
outside = closed == 0
exact = np.array_equal(blended[outside], target[outside])
print(f"background bit-identical to target: {exact}")

write_pgm(out_dir / "mask_raw.pgm", raw)
write_pgm(out_dir / "mask_closed.pgm", closed)
write_pgm(out_dir / "mask_augmented.pgm", jittered)
write_ppm(out_dir / "target.ppm", target)
write_ppm(out_dir / "render.ppm", render.color)
write_ppm(out_dir / "blended.ppm", blended)
print(f"wrote masks and composites to {out_dir}")
