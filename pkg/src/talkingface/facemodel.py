"""Affine morphable face model.

Evaluates face geometry/albedo from low-dimensional coefficients, builds
speaker template faces and mouth-region vertex masks, and computes the
mouth-weighted vertex loss used to supervise expression prediction.

Geometry convention: vertices live in a right-handed frame with x right,
y up, z out of the face, origin near the nose center.  `mean_shape` and the
bases are stored flat, xyz-interleaved (length 3N).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


def _frozen_array(x, dtype=np.float64):
    arr = np.ascontiguousarray(np.asarray(x, dtype=dtype))
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class FaceBasis:
    """Mean shape/texture plus PCA bases for an N-vertex face.

    mean_shape, mean_texture: (3N,) flat xyz / rgb vectors.
    basis_id, basis_exp, basis_tex: (3N, k) column bases.
    triangles: (M, 3) integer vertex indices.
    """

    mean_shape: np.ndarray
    mean_texture: np.ndarray
    basis_id: np.ndarray
    basis_exp: np.ndarray
    basis_tex: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean_shape", _frozen_array(self.mean_shape))
        object.__setattr__(self, "mean_texture", _frozen_array(self.mean_texture))
        object.__setattr__(self, "basis_id", _frozen_array(self.basis_id))
        object.__setattr__(self, "basis_exp", _frozen_array(self.basis_exp))
        object.__setattr__(self, "basis_tex", _frozen_array(self.basis_tex))
        object.__setattr__(self, "triangles", _frozen_array(self.triangles, np.int64))

        n3 = self.mean_shape.shape[0]
        if self.mean_shape.ndim != 1 or n3 % 3:
            raise ValueError(f"mean_shape must be a flat 3N vector, got shape {self.mean_shape.shape}")
        for name in ("mean_texture", "basis_id", "basis_exp", "basis_tex"):
            rows = getattr(self, name).shape[0]
            if rows != n3:
                raise ValueError(f"{name} has {rows} rows, expected 3N={n3}")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices
        ):
            raise ValueError("triangle indices out of range [0, N)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError(f"triangles must be (M, 3), got {self.triangles.shape}")

    @property
    def n_vertices(self) -> int:
        return self.mean_shape.shape[0] // 3

    @property
    def k_id(self) -> int:
        return self.basis_id.shape[1]

    @property
    def k_exp(self) -> int:
        return self.basis_exp.shape[1]

    @property
    def k_tex(self) -> int:
        return self.basis_tex.shape[1]


@dataclass(frozen=True)
class CoeffSet:
    """Per-frame face parameters: identity, expression, texture, and pose."""

    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    rotation: np.ndarray  # 3 Euler angles, radians (applied as Rz @ Ry @ Rx)
    translation: np.ndarray  # metres

    def __post_init__(self):
        for name in ("alpha", "beta", "delta", "rotation", "translation"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        if self.rotation.shape != (3,):
            raise ValueError(f"rotation must be 3 Euler angles, got shape {self.rotation.shape}")
        if self.translation.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got shape {self.translation.shape}")

    def with_beta(self, beta) -> "CoeffSet":
        return replace(self, beta=np.asarray(beta, dtype=np.float64))


@dataclass(frozen=True)
class MouthMask:
    """Vertex indices of the lower-mouth region plus the matching 0/1 vector."""

    indices: np.ndarray  # sorted vertex indices
    vector: np.ndarray  # (N,) with 1 at mouth vertices
    y_threshold: float

    def __post_init__(self):
        object.__setattr__(self, "indices", _frozen_array(self.indices, np.int64))
        object.__setattr__(self, "vector", _frozen_array(self.vector))


def _check_length(vec, expected, name):
    vec = np.asarray(vec, dtype=np.float64).ravel()
    if vec.shape[0] != expected:
        raise ValueError(f"{name} has length {vec.shape[0]}, expected {expected}")
    return vec


def evaluate_shape(basis: FaceBasis, alpha, beta) -> np.ndarray:
    """Face geometry for given identity/expression coefficients, as (N, 3).

    Affine model: mean shape plus identity and expression basis columns
    weighted by the coefficients.
    """
    alpha = _check_length(alpha, basis.k_id, "alpha")
    beta = _check_length(beta, basis.k_exp, "beta")
    flat = basis.mean_shape + basis.basis_id @ alpha + basis.basis_exp @ beta
    return flat.reshape(-1, 3)


def evaluate_texture(basis: FaceBasis, delta) -> np.ndarray:
    """Per-vertex RGB albedo as (N, 3); values are clamped at render time only."""
    delta = _check_length(delta, basis.k_tex, "delta")
    flat = basis.mean_texture + basis.basis_tex @ delta
    return flat.reshape(-1, 3)


def euler_rotation_matrix(rotation) -> np.ndarray:
    """Rotation matrix for intrinsic angles (rx, ry, rz), composed Rz @ Ry @ Rx."""
    rx, ry, rz = np.asarray(rotation, dtype=np.float64)
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    r_x = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    r_y = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    r_z = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return r_z @ r_y @ r_x


def apply_pose(vertices, rotation, translation) -> np.ndarray:
    """Rigidly transform (N, 3) vertices: rotate by Euler angles, then translate."""
    vertices = np.asarray(vertices, dtype=np.float64)
    r = euler_rotation_matrix(rotation)
    t = np.asarray(translation, dtype=np.float64).reshape(3)
    return vertices @ r.T + t


def mean_identity(coeff_sequence) -> np.ndarray:
    """Arithmetic mean of the identity coefficients over a frame sequence."""
    coeffs = list(coeff_sequence)
    if not coeffs:
        raise ValueError("mean_identity: empty coefficient sequence")
    return np.mean([c.alpha for c in coeffs], axis=0)


def template_face(basis: FaceBasis, mean_alpha) -> np.ndarray:
    """Speaker-neutral geometry: the mean shape displaced by the mean identity."""
    return evaluate_shape(basis, mean_alpha, np.zeros(basis.k_exp))


def lower_mouth_indices(basis: FaceBasis, y_threshold: float) -> MouthMask:
    """Vertices of the mean face strictly below a y threshold (lower mouth region).

    The threshold is in the basis's own length unit.  Only mean-face
    y-coordinates are consulted, so the same index set applies to every
    reconstructed face of that topology.
    """
    ys = basis.mean_shape.reshape(-1, 3)[:, 1]
    indices = np.flatnonzero(ys < y_threshold)
    vector = np.zeros(basis.n_vertices)
    vector[indices] = 1.0
    return MouthMask(indices=indices, vector=vector, y_threshold=float(y_threshold))


def vertex_prediction_loss(
    pred_betas, gt_betas, basis: FaceBasis, template, mouth: MouthMask, lambda_m: float
) -> float:
    """Mouth-weighted mean squared vertex error between two expression sequences.

    Both sequences are decoded to vertices on the shared (pose-free) template,
    the mouth mask is broadcast per-vertex over xyz, and each frame contributes

        lambda_m * msq(mask * diff) + msq((1 - mask) * diff)

    where msq is the mean of squared components over the full 3N vector, so
    lambda_m = 1 degenerates to the plain mean squared vertex error.
    """
    pred = np.atleast_2d(np.asarray(pred_betas, dtype=np.float64))
    gt = np.atleast_2d(np.asarray(gt_betas, dtype=np.float64))
    if pred.shape != gt.shape:
        raise ValueError(f"sequence shapes differ: {pred.shape} vs {gt.shape}")
    if pred.shape[1] != basis.k_exp:
        raise ValueError(f"betas have length {pred.shape[1]}, expected k_exp={basis.k_exp}")
    if lambda_m < 1.0:
        raise ValueError(f"lambda_m must be >= 1, got {lambda_m}")

    template_flat = np.asarray(template, dtype=np.float64).reshape(-1)
    weights = np.repeat(mouth.vector, 3)

    s_pred = template_flat + pred @ basis.basis_exp.T
    s_gt = template_flat + gt @ basis.basis_exp.T
    diff = s_pred - s_gt
    mouth_term = ((diff * weights) ** 2).mean(axis=1)
    rest_term = ((diff * (1.0 - weights)) ** 2).mean(axis=1)
    return float((lambda_m * mouth_term + rest_term).mean())


def load_bfm_mat(path, recenter: bool = True) -> FaceBasis:
    """Load a Basel Face Model .mat file (user supplied, never redistributed).

    Expects the common front-face preparation with keys 'meanshape', 'idBase',
    'exBase' and optionally 'meantex', 'texBase', 'tri' (1-based).  Lengths are
    kept in the file's own unit (decimetres for the stock model).  Requires
    scipy.
    """
    from scipy.io import loadmat

    model = loadmat(path)
    mean_shape = np.asarray(model["meanshape"], dtype=np.float64).reshape(-1)
    if recenter:
        pts = mean_shape.reshape(-1, 3)
        mean_shape = (pts - pts.mean(axis=0, keepdims=True)).reshape(-1)
    n3 = mean_shape.shape[0]

    basis_id = np.asarray(model["idBase"], dtype=np.float64).reshape(n3, -1)
    basis_exp = np.asarray(model["exBase"], dtype=np.float64).reshape(n3, -1)
    if "meantex" in model:
        mean_texture = np.asarray(model["meantex"], dtype=np.float64).reshape(-1) / 255.0
    else:
        mean_texture = np.zeros(n3)
    if "texBase" in model:
        basis_tex = np.asarray(model["texBase"], dtype=np.float64).reshape(n3, -1)
    else:
        basis_tex = np.zeros((n3, 0))
    if "tri" in model:
        triangles = np.asarray(model["tri"], dtype=np.int64).reshape(-1, 3) - 1
    else:
        triangles = np.zeros((0, 3), dtype=np.int64)

    return FaceBasis(
        mean_shape=mean_shape,
        mean_texture=mean_texture,
        basis_id=basis_id,
        basis_exp=basis_exp,
        basis_tex=basis_tex,
        triangles=triangles,
    )
