"""Train the audio-to-expression model on the sine-envelope toy task.

The clip's mouth channel follows the audio loudness envelope; after a few
hundred Adam steps the teacher-forced loss collapses and autoregressive
decoding reproduces the envelope from audio alone.
"""

import numpy as np

from talkingface import (
    PredictorConfig,
    audio_frontend,
    lower_mouth_indices,
    make_synthetic_basis,
    train_expression_predictor,
)
from talkingface.expression import window_bias_matrix
from talkingface.synthetic import make_expression_task

basis = make_synthetic_basis(seed=0)
mouth = lower_mouth_indices(basis, -0.1)
config = PredictorConfig()  # d_model 64, 4 heads, window locked to the aligned frame

bias = window_bias_matrix(6, config.lookback, config.lookahead)
print("attention window for 6 frames (0 = attendable):")
print(np.where(np.isfinite(bias), 0, 1))

wave, betas, identity = make_expression_task(seed=0, t_frames=50, basis=basis)
print(f"clip: {betas.shape[0]} frames, {wave.shape[0]} audio samples")

model, log = train_expression_predictor(
    [(wave, betas, identity)], config, basis, mouth,
    lambda_m=1.8, steps=300, lr=1e-4, seed=0,
)
print(f"vertex loss: {log.initial:.2e} -> {log.final:.2e} "
      f"({log.final / log.initial:.1%} of initial)")

features = audio_frontend(wave)
predicted = model.predict(features, identity, betas.shape[0])
err = np.abs(predicted[:, 0] - betas[:, 0])
print(f"autoregressive mouth channel: mean abs error {err.mean():.4f} "
      f"(envelope spans {betas[:, 0].min():.2f}..{betas[:, 0].max():.2f})")
print("first frames, target vs predicted:")
for t in range(0, 10, 2):
    print(f"  t={t:2d}  {betas[t, 0]:.3f}  {predicted[t, 0]:.3f}")
