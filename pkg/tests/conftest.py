import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from talkingface.facemodel import FaceBasis


def random_toy_basis(rng, n_vertices=5, k_id=3, k_exp=3, k_tex=2):
    """A small random face basis for oracle tests; no geometric meaning."""
    n3 = 3 * n_vertices
    pts = rng.normal(0.0, 0.3, size=(n_vertices, 3))
    tris = []
    for i in range(max(n_vertices - 2, 0)):
        tris.append((i, i + 1, i + 2))
    return FaceBasis(
        mean_shape=pts.reshape(-1),
        mean_texture=rng.uniform(0.2, 0.8, size=n3),
        basis_id=rng.normal(0.0, 0.2, size=(n3, k_id)),
        basis_exp=rng.normal(0.0, 0.2, size=(n3, k_exp)),
        basis_tex=rng.normal(0.0, 0.1, size=(n3, k_tex)),
        triangles=np.array(tris, dtype=np.int64).reshape(-1, 3),
    )
