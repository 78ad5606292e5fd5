"""Command-line surface tying the pipeline stages together.

Every subcommand accepts --seed and --config (a key=value text file whose
entries override matching numeric options) and prints a single JSON object
to stdout so runs are scriptable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio import audio_frontend
from .blending import augment_mask, blend, morph_close
from .expression import (
    ExpressionPredictor,
    PredictorConfig,
    load_predictor,
    save_predictor,
    train_expression_predictor,
)
from .facemodel import lower_mouth_indices
from .formats import (
    load_clip,
    load_coeff_sequence,
    load_face_basis,
    parse_config_file,
    read_ppm,
    save_clip,
    save_coeff_sequence,
    save_face_basis,
    write_pgm,
    write_ppm,
)
from .generator import (
    GeneratorConfig,
    LossWeights,
    load_generator,
    save_generator,
    train_generator,
)
from .metrics import psnr, ssim
from .pipeline import PipelineFlags, run_pipeline
from .synthetic import (
    default_camera,
    make_synthetic_basis,
    make_synthetic_clip,
    render_coeffs,
)


def _emit(payload):
    print(json.dumps(payload))


def _apply_config(args, parser):
    """Override argparse values from the --config key=value file."""
    if not getattr(args, "config", None):
        return args
    overrides = parse_config_file(args.config)
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            parser.error(f"unknown config key '{key}'")
        current = getattr(args, attr)
        if isinstance(current, bool):
            setattr(args, attr, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(args, attr, int(value))
        elif isinstance(current, float):
            setattr(args, attr, float(value))
        else:
            setattr(args, attr, value)
    return args


def _substituted_coeffs(clip, betas_path):
    if betas_path is None:
        return list(clip.coeffs)
    loaded = load_coeff_sequence(betas_path)
    if len(loaded) != clip.n_frames:
        raise SystemExit(
            f"betas file has {len(loaded)} frames, clip has {clip.n_frames}"
        )
    return [c.with_beta(l.beta) for c, l in zip(clip.coeffs, loaded)]


def _depth_preview(depth):
    finite = np.isfinite(depth)
    if not finite.any():
        return np.zeros(depth.shape, dtype=np.uint8)
    lo, hi = depth[finite].min(), depth[finite].max()
    span = (hi - lo) if hi > lo else 1.0
    out = np.zeros(depth.shape, dtype=np.uint8)
    out[finite] = np.round(255.0 * (1.0 - (depth[finite] - lo) / span)).astype(np.uint8)
    return out


def cmd_gen_basis(args):
    basis = make_synthetic_basis(
        seed=args.seed, grid=args.grid, k_id=args.k_id, k_exp=args.k_exp, k_tex=args.k_tex
    )
    save_face_basis(args.out, basis)
    _emit(
        {
            "command": "gen-basis",
            "out": str(args.out),
            "n_vertices": basis.n_vertices,
            "k_id": basis.k_id,
            "k_exp": basis.k_exp,
            "k_tex": basis.k_tex,
            "triangles": int(basis.triangles.shape[0]),
        }
    )


def cmd_gen_clip(args):
    basis = load_face_basis(args.basis)
    clip = make_synthetic_clip(
        args.seed, args.frames, basis, camera=default_camera(args.size), identity=args.identity
    )
    save_clip(args.out, clip)
    _emit(
        {
            "command": "gen-clip",
            "out": str(args.out),
            "frames": clip.n_frames,
            "samples": int(clip.waveform.shape[0]),
            "reference_index": clip.reference_index,
            "size": args.size,
        }
    )


def cmd_render(args):
    basis = load_face_basis(args.basis)
    clip = load_clip(args.clip)
    camera = default_camera(args.size)
    coeffs = _substituted_coeffs(clip, args.betas)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    covered = []
    for t, coeff in enumerate(coeffs):
        render = render_coeffs(basis, coeff, camera)
        write_ppm(out_dir / f"frame_{t:06d}.ppm", render.color)
        write_pgm(out_dir / f"mask_{t:06d}.pgm", render.face_mask)
        write_pgm(out_dir / f"depth_{t:06d}.pgm", _depth_preview(render.depth))
        covered.append(float(render.face_mask.mean()))
    _emit(
        {
            "command": "render",
            "out": str(out_dir),
            "frames": len(coeffs),
            "mean_mask_coverage": round(float(np.mean(covered)), 4),
        }
    )


def cmd_blend(args):
    basis = load_face_basis(args.basis)
    clip = load_clip(args.clip)
    camera = default_camera(args.size)
    coeffs = _substituted_coeffs(clip, args.betas)
    kernel_sizes = tuple(int(s) for s in args.kernel_sizes.split(","))
    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t, coeff in enumerate(coeffs):
        render = render_coeffs(basis, coeff, camera)
        if args.augment:
            mask = augment_mask(render.face_mask, rng, kernel_sizes, args.close_size)
        else:
            mask = morph_close(render.face_mask, args.close_size)
        target = clip.frames[t].astype(np.float64) / 255.0
        blended = blend(render.color, target, mask)
        write_ppm(out_dir / f"frame_{t:06d}.ppm", blended)
        write_pgm(out_dir / f"mask_{t:06d}.pgm", mask)
    _emit(
        {
            "command": "blend",
            "out": str(out_dir),
            "frames": len(coeffs),
            "augment": bool(args.augment),
        }
    )


def cmd_train_a2ep(args):
    basis = load_face_basis(args.basis)
    mouth = lower_mouth_indices(basis, args.mouth_threshold)
    clips = [load_clip(path) for path in args.clip]
    dataset = [(c.waveform, c.betas(), c.identity) for c in clips]
    n_identities = max(c.identity for c in clips) + 1
    config = PredictorConfig(
        d_model=args.d_model,
        cross_heads=args.cross_heads,
        self_heads=args.self_heads,
        ff_dim=args.ff_dim,
        k_exp=basis.k_exp,
        n_identities=n_identities,
        lookback=args.lookback,
        lookahead=args.lookahead,
    )
    model, log = train_expression_predictor(
        dataset,
        config,
        basis,
        mouth,
        lambda_m=args.lambda_m,
        steps=args.steps,
        lr=args.lr,
        seed=args.seed,
    )
    save_predictor(args.out, model)
    _emit(
        {
            "command": "train-a2ep",
            "out": str(args.out),
            "steps": args.steps,
            "initial_loss": log.initial,
            "final_loss": log.final,
            "mouth_vertices": int(mouth.indices.size),
        }
    )


def cmd_infer_a2ep(args):
    model = load_predictor(args.weights)
    clip = load_clip(args.clip)
    identity = clip.identity if args.identity is None else args.identity
    features = audio_frontend(clip.waveform)
    betas = model.predict(features, identity, clip.n_frames)
    coeffs = [c.with_beta(b) for c, b in zip(clip.coeffs, betas)]
    save_coeff_sequence(args.out, coeffs)
    _emit(
        {
            "command": "infer-a2ep",
            "out": str(args.out),
            "frames": int(betas.shape[0]),
            "identity": int(identity),
            "beta_rms": float(np.sqrt((betas**2).mean())),
        }
    )


def cmd_train_taft(args):
    basis = load_face_basis(args.basis)
    clip = load_clip(args.clip)
    size = clip.frames[0].shape[0]
    camera = default_camera(size)
    reference = clip.frames[clip.reference_index].astype(np.float64) / 255.0
    triples = []
    for t in range(clip.n_frames):
        render = render_coeffs(basis, clip.coeffs[t], camera)
        mask = morph_close(render.face_mask, args.close_size)
        target = clip.frames[t].astype(np.float64) / 255.0
        triples.append((blend(render.color, target, mask), reference, target))
    config = GeneratorConfig(base_width=args.base_width, depth=args.depth,
                             use_skips=not args.no_skips)
    weights = LossWeights(args.lambda_photo, args.lambda_perc, args.lambda_style)
    model, losses = train_generator(
        triples, config, weights, steps=args.steps, lr=args.lr, seed=args.seed
    )
    save_generator(args.out, model)
    _emit(
        {
            "command": "train-taft",
            "out": str(args.out),
            "steps": args.steps,
            "initial_loss": losses[0],
            "final_loss": losses[-1],
            "triples": len(triples),
        }
    )


def cmd_run(args):
    basis = load_face_basis(args.basis)
    clip = load_clip(args.clip)
    size = clip.frames[0].shape[0]
    camera = default_camera(size)
    predictor = load_predictor(args.a2ep) if args.a2ep else None
    generator = load_generator(args.taft) if args.taft else None
    mouth = lower_mouth_indices(basis, args.mouth_threshold)
    flags = PipelineFlags(
        use_gt_betas=args.use_gt_betas,
        bypass_generator=args.bypass_generator,
        augment=args.augment,
        close_size=args.close_size,
        seed=args.seed,
    )
    report = run_pipeline(
        clip, basis, camera, predictor, generator, args.out, flags, mouth=mouth
    )
    _emit(
        {
            "command": "run",
            "out": str(args.out),
            "report": json.loads(report.to_json()),
        }
    )


def cmd_eval(args):
    pred_dir = Path(args.pred)
    target_dir = Path(args.target)
    pred_frames = sorted(pred_dir.glob("frame_*.ppm"))
    if not pred_frames:
        raise SystemExit(f"no frame_*.ppm files in {pred_dir}")
    psnr_values = []
    ssim_values = []
    for path in pred_frames:
        target_path = target_dir / path.name
        if not target_path.exists():
            raise SystemExit(f"missing target frame {target_path}")
        a = read_ppm(path).astype(np.float64)
        b = read_ppm(target_path).astype(np.float64)
        psnr_values.append(psnr(a, b, 255.0))
        ssim_values.append(ssim(a, b, 255.0))
    finite = [v for v in psnr_values if np.isfinite(v)]
    _emit(
        {
            "command": "eval",
            "frames": len(pred_frames),
            "psnr": float(np.mean(finite)) if finite else float("inf"),
            "ssim": float(np.mean(ssim_values)),
        }
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="talkingface",
        description="Audio-driven talking face synthesis (desk-scale).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="key=value overrides file")

    p = sub.add_parser("gen-basis", help="write a synthetic face basis (FB3D)")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=6)
    p.add_argument("--k-id", type=int, default=8)
    p.add_argument("--k-exp", type=int, default=64)
    p.add_argument("--k-tex", type=int, default=4)
    common(p)
    p.set_defaults(func=cmd_gen_basis)

    p = sub.add_parser("gen-clip", help="write a synthetic clip directory")
    p.add_argument("--basis", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=25)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--identity", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_gen_clip)

    p = sub.add_parser("render", help="render a clip's coefficients to frames")
    p.add_argument("--basis", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--betas", default=None, help="substitute expressions (JSONL)")
    p.add_argument("--size", type=int, default=64)
    common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("blend", help="render, morph the mask, and composite")
    p.add_argument("--basis", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--betas", default=None)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--close-size", type=int, default=9)
    p.add_argument("--kernel-sizes", default="3,5,7")
    common(p)
    p.set_defaults(func=cmd_blend)

    p = sub.add_parser("train-a2ep", help="train the expression predictor")
    p.add_argument("--basis", required=True)
    p.add_argument("--clip", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lambda-m", type=float, default=1.8)
    p.add_argument("--mouth-threshold", type=float, default=-0.1)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--cross-heads", type=int, default=4)
    p.add_argument("--self-heads", type=int, default=4)
    p.add_argument("--ff-dim", type=int, default=256)
    p.add_argument("--lookback", type=int, default=0)
    p.add_argument("--lookahead", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_train_a2ep)

    p = sub.add_parser("infer-a2ep", help="predict expressions for a clip's audio")
    p.add_argument("--weights", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument(
        "--identity", type=int, default=None,
        help="speaking-style embedding to use (any trained one-hot)",
    )
    common(p)
    p.set_defaults(func=cmd_infer_a2ep)

    p = sub.add_parser("train-taft", help="train the face translation generator")
    p.add_argument("--basis", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--base-width", type=int, default=8)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--no-skips", action="store_true")
    p.add_argument("--close-size", type=int, default=9)
    p.add_argument("--lambda-photo", type=float, default=1.0)
    p.add_argument("--lambda-perc", type=float, default=4.0)
    p.add_argument("--lambda-style", type=float, default=1000.0)
    common(p)
    p.set_defaults(func=cmd_train_taft)

    p = sub.add_parser("run", help="full pipeline: predict, render, blend, translate")
    p.add_argument("--basis", required=True)
    p.add_argument("--clip", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--a2ep", default=None, help="expression predictor weights")
    p.add_argument("--taft", default=None, help="generator weights")
    p.add_argument("--use-gt-betas", action="store_true")
    p.add_argument("--bypass-generator", action="store_true")
    p.add_argument("--augment", action="store_true")
    p.add_argument("--close-size", type=int, default=9)
    p.add_argument("--mouth-threshold", type=float, default=-0.1)
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="PSNR/SSIM between two frame directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, parser)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
