"""Audio-driven talking face synthesis at desk scale.

The pipeline in one pass: an affine morphable face model decodes expression
coefficients to vertices (`facemodel`), a z-buffer renderer draws them
(`rasterizer`), a transformer predicts expressions from audio features
(`audio`, `expression`) trained through a small reverse-mode autodiff engine
(`autodiff`), morphology-cleaned masks composite the render over the target
frame (`blending`), and a skip-connected generator repairs the composite
(`generator`).  `metrics`, `formats`, `synthetic`, `pipeline`, and `cli`
supply evaluation, file I/O, toy data, and the end-to-end surface.
"""

from .autodiff import Adam, Tensor, backward, no_grad
from .facemodel import (
    CoeffSet,
    FaceBasis,
    MouthMask,
    apply_pose,
    evaluate_shape,
    evaluate_texture,
    lower_mouth_indices,
    mean_identity,
    template_face,
    vertex_prediction_loss,
)
from .rasterizer import Camera, RenderOutput, project_perspective, rasterize
from .audio import AudioFeatures, audio_frontend, resample_linear
from .expression import (
    ExpressionPredictor,
    PredictorConfig,
    biased_cross_attention,
    positional_encoding,
    train_expression_predictor,
    window_bias_matrix,
)
from .blending import (
    augment_mask,
    blend,
    combine_params,
    morph_close,
    morph_dilate,
    morph_erode,
)
from .generator import (
    FeatureStack,
    Generator,
    GeneratorConfig,
    LossWeights,
    generator_forward,
    gram_matrix,
    perceptual_loss,
    photometric_loss,
    pyramid_downsample,
    style_loss,
    total_loss,
    train_generator,
)
from .metrics import MetricReport, lmd, psnr, ssim
from .synthetic import ClipBundle, default_camera, make_synthetic_basis, make_synthetic_clip
from .pipeline import PipelineFlags, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AudioFeatures",
    "Camera",
    "ClipBundle",
    "CoeffSet",
    "ExpressionPredictor",
    "FaceBasis",
    "FeatureStack",
    "Generator",
    "GeneratorConfig",
    "LossWeights",
    "MetricReport",
    "MouthMask",
    "PipelineFlags",
    "PredictorConfig",
    "RenderOutput",
    "Tensor",
    "apply_pose",
    "audio_frontend",
    "augment_mask",
    "backward",
    "biased_cross_attention",
    "blend",
    "combine_params",
    "default_camera",
    "evaluate_shape",
    "evaluate_texture",
    "generator_forward",
    "gram_matrix",
    "lmd",
    "lower_mouth_indices",
    "make_synthetic_basis",
    "make_synthetic_clip",
    "mean_identity",
    "morph_close",
    "morph_dilate",
    "morph_erode",
    "no_grad",
    "perceptual_loss",
    "photometric_loss",
    "positional_encoding",
    "project_perspective",
    "psnr",
    "pyramid_downsample",
    "rasterize",
    "resample_linear",
    "run_pipeline",
    "ssim",
    "style_loss",
    "template_face",
    "total_loss",
    "train_expression_predictor",
    "train_generator",
    "vertex_prediction_loss",
    "window_bias_matrix",
]
