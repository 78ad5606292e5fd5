"""Synthetic desk-scale stand-ins for captured data.

Builds small dome-shaped face bases with localized deformation columns, clips
whose expression channel follows a smooth envelope, and the amplitude-
modulated audio that goes with them (mouth channel and loudness correlate by
construction).  Everything is deterministic in the seed; basis arrays are
rounded through float32 so file round-trips are bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .facemodel import CoeffSet, FaceBasis, evaluate_shape, evaluate_texture, apply_pose
from .rasterizer import Camera, rasterize

FPS = 25
SAMPLE_RATE = 16000
SAMPLES_PER_FRAME = SAMPLE_RATE // FPS  # 640


def _gauss_bump(points, center, sigma):
    d2 = ((points - center) ** 2).sum(axis=1)
    return np.exp(-d2 / (2.0 * sigma * sigma))


def make_synthetic_basis(seed=0, grid=6, k_id=8, k_exp=64, k_tex=4) -> FaceBasis:
    """A dome-shaped toy face with localized random deformation columns.

    Expression column 0 is concentrated on the lower ("mouth") region and
    pulls it down/out, so mouth masks and the mouth-weighted loss are
    meaningful on the toy.  Remaining expression columns are small bumps.
    """
    rng = np.random.default_rng(seed)
    xs = np.linspace(-0.5, 0.5, grid)
    gx, gy = np.meshgrid(xs, xs)
    gz = 0.4 * np.exp(-3.0 * (gx**2 + gy**2))
    points = np.column_stack([gx.ravel(), -gy.ravel(), gz.ravel()])
    points -= points.mean(axis=0)
    n = points.shape[0]

    tris = []
    for r in range(grid - 1):
        for c in range(grid - 1):
            a = r * grid + c
            b = a + 1
            d = a + grid
            e = d + 1
            tris.append((a, b, d))
            tris.append((b, e, d))
    triangles = np.array(tris, dtype=np.int64)

    def bump_column(center, direction, amplitude, sigma):
        disp = np.outer(_gauss_bump(points, center, sigma), direction) * amplitude
        return disp.reshape(-1)

    basis_id = np.zeros((3 * n, k_id))
    for j in range(k_id):
        center = points[rng.integers(n)]
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        basis_id[:, j] = bump_column(center, direction, 0.08, 0.3)

    basis_exp = np.zeros((3 * n, k_exp))
    mouth_center = np.array([0.0, points[:, 1].min() * 0.7, points[:, 2].max() * 0.5])
    basis_exp[:, 0] = bump_column(mouth_center, np.array([0.0, -0.6, 0.8]), 0.15, 0.25)
    for j in range(1, k_exp):
        center = points[rng.integers(n)]
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        basis_exp[:, j] = bump_column(center, direction, 0.02, 0.25)

    basis_tex = np.zeros((3 * n, k_tex))
    for j in range(k_tex):
        center = points[rng.integers(n)]
        tint = rng.normal(size=3)
        tint /= np.linalg.norm(tint)
        basis_tex[:, j] = bump_column(center, tint, 0.08, 0.35)

    base_tone = np.array([0.80, 0.62, 0.52])
    mean_texture = np.tile(base_tone, n) + 0.10 * np.repeat(points[:, 1], 3)
    mean_texture = np.clip(mean_texture, 0.05, 0.95)

    as_f32 = lambda a: np.asarray(a, dtype=np.float32).astype(np.float64)
    return FaceBasis(
        mean_shape=as_f32(points.reshape(-1)),
        mean_texture=as_f32(mean_texture),
        basis_id=as_f32(basis_id),
        basis_exp=as_f32(basis_exp),
        basis_tex=as_f32(basis_tex),
        triangles=triangles,
    )


def default_camera(size=64) -> Camera:
    """Frames the synthetic face (at z = 2.5) to roughly two thirds of the image."""
    return Camera(focal=1.7 * size, cx=size / 2.0, cy=size / 2.0, width=size, height=size)


FACE_DISTANCE = 2.5


def smooth_envelope(rng, t_frames: int) -> np.ndarray:
    """A positive low-frequency envelope in roughly [0.2, 0.9]."""
    t = np.arange(t_frames) / max(t_frames, 1)
    f1 = rng.integers(1, 4)
    f2 = rng.integers(3, 7)
    p1, p2 = rng.uniform(0, 2 * np.pi, size=2)
    env = 0.55 + 0.20 * np.sin(2 * np.pi * f1 * t + p1) + 0.15 * np.sin(2 * np.pi * f2 * t + p2)
    return np.clip(env, 0.15, 0.95)


def envelope_waveform(envelope, carrier_hz=440.0) -> np.ndarray:
    """Amplitude-modulate a sine carrier by a per-frame envelope; int16 PCM.

    The envelope is held constant within each frame, so per-frame loudness
    tracks it tightly (the mouth-channel/audio correlation is by construction).
    """
    env = np.asarray(envelope, dtype=np.float64)
    n = env.shape[0] * SAMPLES_PER_FRAME
    t = np.arange(n) / SAMPLE_RATE
    carrier = np.sin(2 * np.pi * carrier_hz * t)
    per_sample = np.repeat(env, SAMPLES_PER_FRAME)
    wave = 0.9 * per_sample * carrier
    return np.round(wave * 32767.0).astype(np.int16)


def make_expression_task(seed, t_frames, basis: FaceBasis, identity=0):
    """(waveform, betas, identity): the mouth channel follows the audio envelope."""
    rng = np.random.default_rng(seed)
    env = smooth_envelope(rng, t_frames)
    betas = np.zeros((t_frames, basis.k_exp))
    betas[:, 0] = env
    return envelope_waveform(env), betas, identity


@dataclass
class ClipBundle:
    """A synthetic clip: per-frame coefficients, audio, and target frames.

    `frames` are uint8 (H, W, 3) images, file-faithful to what a video source
    would provide; `waveform` is int16 PCM at 16 kHz with exactly 640 samples
    per frame at 25 FPS.
    """

    coeffs: list
    waveform: np.ndarray
    frames: list
    reference_index: int
    identity: int
    fps: int = FPS
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if len(self.coeffs) != len(self.frames):
            raise ValueError(
                f"{len(self.coeffs)} coefficient frames vs {len(self.frames)} images"
            )
        expected = len(self.coeffs) * (self.sample_rate // self.fps)
        if abs(int(self.waveform.shape[0]) - expected) > 160:
            raise ValueError(
                f"audio length {self.waveform.shape[0]} does not match "
                f"{len(self.coeffs)} frames at {self.fps} FPS (expected ~{expected})"
            )

    @property
    def n_frames(self):
        return len(self.coeffs)

    def betas(self) -> np.ndarray:
        return np.stack([c.beta for c in self.coeffs])


def render_coeffs(basis: FaceBasis, coeff: CoeffSet, camera: Camera):
    """Shape -> pose -> rasterize with the coefficient set's albedo."""
    verts = apply_pose(
        evaluate_shape(basis, coeff.alpha, coeff.beta), coeff.rotation, coeff.translation
    )
    colors = np.clip(evaluate_texture(basis, coeff.delta), 0.0, 1.0)
    return rasterize(verts, colors, basis.triangles, camera)


def quantize_image(img: np.ndarray) -> np.ndarray:
    """Float [0,1] image to uint8 the same way frames are written to disk."""
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def make_synthetic_clip(
    seed, t_frames, basis: FaceBasis, camera: Camera | None = None, identity=0
) -> ClipBundle:
    """Deterministic clip: smooth coefficients, correlated audio, rendered targets."""
    rng = np.random.default_rng(seed)
    camera = camera if camera is not None else default_camera()
    k_exp = basis.k_exp

    env = smooth_envelope(rng, t_frames)
    t = np.arange(t_frames) / max(t_frames, 1)
    betas = np.zeros((t_frames, k_exp))
    betas[:, 0] = env
    for j in range(1, min(k_exp, 6)):
        f = rng.integers(1, 4)
        phase = rng.uniform(0, 2 * np.pi)
        betas[:, j] = 0.05 * np.sin(2 * np.pi * f * t + phase)

    alpha = rng.normal(0.0, 0.4, size=basis.k_id)
    delta = rng.normal(0.0, 0.4, size=basis.k_tex)
    yaw = 0.06 * np.sin(2 * np.pi * t + rng.uniform(0, 2 * np.pi))

    coeffs = []
    frames = []
    for i in range(t_frames):
        c = CoeffSet(
            alpha=alpha,
            beta=betas[i],
            delta=delta,
            rotation=np.array([0.0, yaw[i], 0.0]),
            translation=np.array([0.0, 0.0, FACE_DISTANCE]),
        )
        coeffs.append(c)
        frames.append(quantize_image(render_coeffs(basis, c, camera).color))

    return ClipBundle(
        coeffs=coeffs,
        waveform=envelope_waveform(env),
        frames=frames,
        reference_index=int(rng.integers(t_frames)),
        identity=identity,
    )
