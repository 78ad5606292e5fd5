"""End-to-end inference: audio -> expressions -> render -> blend -> translate.

For every frame of a clip the predicted expression coefficients replace the
reconstructed ones, the face is rendered with its pose, the face mask is
cleaned by morphological closing (random dilation/erosion jitter is a
training-time option and off here by default), the rendering is composited
over the target frame, and the generator repairs the composite.  Frames are
written as frame_%06d.ppm plus a JSON metric report against the targets.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import audio_frontend
from .blending import augment_mask, blend, combine_params, morph_close
from .expression import ExpressionPredictor
from .facemodel import FaceBasis, MouthMask, apply_pose, evaluate_shape
from .formats import write_pgm, write_ppm
from .generator import Generator, generator_forward
from .metrics import MetricReport, lmd, psnr, ssim
from .rasterizer import Camera, project_perspective
from .synthetic import ClipBundle, quantize_image, render_coeffs


@dataclass
class PipelineFlags:
    """Switches for ablations and debugging runs."""

    use_gt_betas: bool = False  # skip prediction, reuse the clip's coefficients
    bypass_generator: bool = False  # emit the blended frames directly
    augment: bool = False  # random mask jitter (training-time behaviour)
    close_size: int = 9
    kernel_sizes: tuple = (3, 5, 7)
    seed: int = 0


def _landmarks(basis, coeff, camera, mouth):
    verts = apply_pose(
        evaluate_shape(basis, coeff.alpha, coeff.beta), coeff.rotation, coeff.translation
    )
    if mouth is not None and mouth.indices.size:
        verts = verts[mouth.indices]
    pts, clipped = project_perspective(verts, camera)
    return pts[~clipped, :2]


def run_pipeline(
    clip: ClipBundle,
    basis: FaceBasis,
    camera: Camera,
    predictor: ExpressionPredictor | None,
    generator: Generator | None,
    out_dir,
    flags: PipelineFlags | None = None,
    mouth: MouthMask | None = None,
) -> MetricReport:
    """Synthesize output frames for a clip and score them against its targets.

    `predictor` may be None only with flags.use_gt_betas; `generator` only
    with flags.bypass_generator.  Deterministic for a fixed flags.seed.
    """
    flags = flags if flags is not None else PipelineFlags()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t_frames = clip.n_frames
    rng = np.random.default_rng(flags.seed)

    if flags.use_gt_betas:
        betas = clip.betas()
    else:
        if predictor is None:
            raise ValueError("no predictor weights given and use_gt_betas not set")
        features = audio_frontend(clip.waveform)
        betas = predictor.predict(features, clip.identity, t_frames)

    if generator is None and not flags.bypass_generator:
        raise ValueError("no generator weights given and bypass_generator not set")

    reference = clip.frames[clip.reference_index].astype(np.float64) / 255.0

    psnr_values = []
    ssim_values = []
    pred_points = []
    gt_points = []
    for t in range(t_frames):
        combined = combine_params(clip.coeffs[t], betas[t])
        render = render_coeffs(basis, combined, camera)
        if flags.augment:
            mask = augment_mask(
                render.face_mask, rng, flags.kernel_sizes, flags.close_size
            )
        else:
            mask = morph_close(render.face_mask, flags.close_size)
        target = clip.frames[t].astype(np.float64) / 255.0
        blended = blend(render.color, target, mask)
        if flags.bypass_generator:
            output = blended
        else:
            output = generator_forward(blended, reference, generator)

        out_u8 = quantize_image(output)
        write_ppm(out_dir / f"frame_{t:06d}.ppm", out_u8)
        write_pgm(out_dir / f"mask_{t:06d}.pgm", mask)

        target_u8 = clip.frames[t]
        psnr_values.append(psnr(out_u8.astype(np.float64), target_u8.astype(np.float64), 255.0))
        ssim_values.append(ssim(out_u8.astype(np.float64), target_u8.astype(np.float64), 255.0))
        pred_points.append(_landmarks(basis, combined, camera, mouth))
        gt_points.append(_landmarks(basis, clip.coeffs[t], camera, mouth))

    lmd_value = float(
        np.mean([lmd(p, g) for p, g in zip(pred_points, gt_points)])
    )
    finite = [v for v in psnr_values if np.isfinite(v)]
    report = MetricReport(
        psnr=float(np.mean(finite)) if finite else np.inf,
        ssim=float(np.mean(ssim_values)),
        lmd=lmd_value,
        frames=t_frames,
    )
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    return report


def hash_frames(directory) -> str:
    """SHA-256 over all frame files, for byte-level determinism checks."""
    directory = Path(directory)
    digest = hashlib.sha256()
    for path in sorted(directory.glob("frame_*.ppm")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()
