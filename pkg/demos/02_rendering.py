"""Render the synthetic face with the software rasterizer.

Writes a few expression frames, their face masks, and a depth preview to
demos/output/.  The mask marks exactly the pixels where depth is finite.
"""

from pathlib import Path

import numpy as np

from talkingface import default_camera, make_synthetic_basis
from talkingface.facemodel import CoeffSet
from talkingface.formats import write_pgm, write_ppm
from talkingface.synthetic import FACE_DISTANCE, render_coeffs

out_dir = Path(__file__).parent / "output" / "rendering"
out_dir.mkdir(parents=True, exist_ok=True)

basis = make_synthetic_basis(seed=0)
camera = default_camera(size=128)

for i, amount in enumerate((0.0, 0.5, 1.0)):
    beta = np.zeros(basis.k_exp)
    beta[0] = amount
    coeff = CoeffSet(
        alpha=np.zeros(basis.k_id),
        beta=beta,
        delta=np.zeros(basis.k_tex),
        rotation=np.array([0.0, 0.15 * amount, 0.0]),  # slight turn as it opens
        translation=np.array([0.0, 0.0, FACE_DISTANCE]),
    )
    render = render_coeffs(basis, coeff, camera)
    write_ppm(out_dir / f"face_{i}.ppm", render.color)
    write_pgm(out_dir / f"mask_{i}.pgm", render.face_mask)

    finite = np.isfinite(render.depth)
    assert (render.face_mask == 1).sum() == finite.sum()
    print(f"mouth={amount:.1f}: {int(finite.sum())} face pixels, "
          f"depth range {render.depth[finite].min():.3f}..{render.depth[finite].max():.3f}")

depth = render.depth.copy()
finite = np.isfinite(depth)
preview = np.zeros(depth.shape)
preview[finite] = 1.0 - (depth[finite] - depth[finite].min()) / (
    depth[finite].ptp() or 1.0
)
write_pgm(out_dir / "depth_preview.pgm", preview)
print(f"wrote frames, masks, and a depth preview to {out_dir}")
