import numpy as np
import pytest

from talkingface.facemodel import lower_mouth_indices
from talkingface.synthetic import (
    ClipBundle,
    SAMPLES_PER_FRAME,
    default_camera,
    envelope_waveform,
    make_expression_task,
    make_synthetic_basis,
    make_synthetic_clip,
    render_coeffs,
    smooth_envelope,
)


def pearson_oracle(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / np.sqrt(sxx * syy)


def test_basis_is_valid_and_deterministic():
    a = make_synthetic_basis(0)
    b = make_synthetic_basis(0)
    np.testing.assert_array_equal(a.mean_shape, b.mean_shape)
    np.testing.assert_array_equal(a.basis_exp, b.basis_exp)
    assert a.n_vertices == 36
    assert a.triangles.shape == (50, 3)


def test_basis_has_a_mouth_region():
    basis = make_synthetic_basis(0)
    mouth = lower_mouth_indices(basis, -0.1)
    assert 0 < mouth.indices.size < basis.n_vertices
    # the dedicated mouth column moves mouth vertices more than the rest
    col = basis.basis_exp[:, 0].reshape(-1, 3)
    motion = np.linalg.norm(col, axis=1)
    rest = np.setdiff1d(np.arange(basis.n_vertices), mouth.indices)
    assert motion[mouth.indices].mean() > 2.0 * motion[rest].mean()


def test_clip_same_seed_bit_identical():
    basis = make_synthetic_basis(1)
    a = make_synthetic_clip(5, 4, basis)
    b = make_synthetic_clip(5, 4, basis)
    np.testing.assert_array_equal(a.waveform, b.waveform)
    assert a.reference_index == b.reference_index
    for fa, fb in zip(a.frames, b.frames):
        np.testing.assert_array_equal(fa, fb)
    for ca, cb in zip(a.coeffs, b.coeffs):
        np.testing.assert_array_equal(ca.beta, cb.beta)


def test_clip_frame_and_sample_counts():
    basis = make_synthetic_basis(1)
    clip = make_synthetic_clip(2, 6, basis)
    assert clip.n_frames == 6
    assert clip.waveform.shape[0] == 6 * SAMPLES_PER_FRAME


def test_clip_renders_nonempty_faces():
    basis = make_synthetic_basis(1)
    clip = make_synthetic_clip(3, 3, basis)
    for frame in clip.frames:
        coverage = (frame.sum(axis=2) > 0).mean()
        assert 0.1 < coverage < 0.9


def test_envelope_correlates_with_audio_loudness():
    basis = make_synthetic_basis(0)
    wave, betas, identity = make_expression_task(4, 50, basis)
    w = wave.astype(np.float64) / 32768.0
    rms = np.sqrt((w.reshape(50, SAMPLES_PER_FRAME) ** 2).mean(axis=1))
    r = pearson_oracle(rms.tolist(), betas[:, 0].tolist())
    assert abs(r) > 0.9
    assert identity == 0


def test_envelope_range():
    rng = np.random.default_rng(5)
    env = smooth_envelope(rng, 100)
    assert env.min() >= 0.15 and env.max() <= 0.95


def test_waveform_is_int16_and_bounded():
    rng = np.random.default_rng(6)
    env = smooth_envelope(rng, 10)
    wave = envelope_waveform(env)
    assert wave.dtype == np.int16
    assert wave.shape[0] == 10 * SAMPLES_PER_FRAME


def test_clip_bundle_validation():
    basis = make_synthetic_basis(1)
    clip = make_synthetic_clip(2, 3, basis)
    with pytest.raises(ValueError):
        ClipBundle(
            coeffs=clip.coeffs,
            waveform=clip.waveform[:100],
            frames=clip.frames,
            reference_index=0,
            identity=0,
        )
    with pytest.raises(ValueError):
        ClipBundle(
            coeffs=clip.coeffs[:-1],
            waveform=clip.waveform,
            frames=clip.frames,
            reference_index=0,
            identity=0,
        )


def test_render_coeffs_produces_mask():
    basis = make_synthetic_basis(1)
    clip = make_synthetic_clip(2, 1, basis)
    out = render_coeffs(basis, clip.coeffs[0], default_camera())
    assert out.face_mask.sum() > 0
    np.testing.assert_array_equal(out.face_mask, np.isfinite(out.depth))
