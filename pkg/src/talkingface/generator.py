"""Face translation generator and its composite training loss.

A small encoder-decoder with skip connections maps the channel-concatenated
(blended, reference) image pair to a repaired frame in [0, 1].  Training
minimizes a weighted sum of pixel L1, a multi-scale perceptual distance, and
a Gram-matrix style distance, both computed on a fixed seeded convolutional
feature stack (an untrained stand-in for a pretrained backbone, documented
as a fidelity gap).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class GeneratorConfig:
    in_channels: int = 6  # blended and reference images, channel-concatenated
    base_width: int = 8
    depth: int = 3
    out_channels: int = 3
    use_skips: bool = True

    def __post_init__(self):
        if self.depth < 1 or self.base_width < 1:
            raise ValueError("depth and base_width must be positive")


@dataclass
class LossWeights:
    photometric: float = 1.0
    perceptual: float = 4.0
    style: float = 1000.0

    def __post_init__(self):
        if min(self.photometric, self.perceptual, self.style) < 0:
            raise ValueError("loss weights must be nonnegative")


def _he_conv(rng, c_out, c_in, k=3):
    scale = np.sqrt(2.0 / (c_in * k * k))
    return rng.normal(0.0, scale, size=(c_out, c_in, k, k))


class Generator:
    """Skip-connected encoder-decoder over NCHW tensors."""

    def __init__(self, config: GeneratorConfig, rng=None, seed=0):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(seed)
        c = config
        widths = [c.base_width * 2**i for i in range(c.depth + 1)]
        self.widths = widths

        p = {}

        def conv(name, c_out, c_in):
            p[f"{name}_w"] = ad.Tensor(_he_conv(rng, c_out, c_in), requires_grad=True)
            p[f"{name}_b"] = ad.Tensor(np.zeros(c_out), requires_grad=True)

        conv("enc0", widths[0], c.in_channels)
        for i in range(1, c.depth + 1):
            conv(f"down{i}", widths[i], widths[i - 1])
        conv("mid", widths[c.depth], widths[c.depth])
        for i in range(c.depth - 1, -1, -1):
            c_in = widths[i + 1] + (widths[i] if c.use_skips else 0)
            conv(f"up{i}", widths[i], c_in)
        conv("out", c.out_channels, widths[0])
        self.params = p

    def parameters(self):
        return self.params

    def forward(self, x) -> ad.Tensor:
        """(B, in_channels, H, W) -> (B, out_channels, H, W) in [0, 1]."""
        x = ad._lift(x)
        c = self.config
        if x.ndim != 4 or x.shape[1] != c.in_channels:
            raise ValueError(
                f"expected (B, {c.in_channels}, H, W) input, got {x.shape}"
            )
        h, w = x.shape[2], x.shape[3]
        if h % 2**c.depth or w % 2**c.depth:
            raise ValueError(
                f"spatial size {h}x{w} not divisible by 2^depth = {2 ** c.depth}"
            )
        p = self.params

        def block(t, name, stride):
            return ad.relu(
                ad.conv2d(t, p[f"{name}_w"], p[f"{name}_b"], stride=stride, padding=1)
            )

        skips = [block(x, "enc0", 1)]
        for i in range(1, c.depth + 1):
            skips.append(block(skips[-1], f"down{i}", 2))
        t = block(skips[c.depth], "mid", 1)
        for i in range(c.depth - 1, -1, -1):
            t = ad.upsample2x(t)
            if c.use_skips:
                t = ad.concat([t, skips[i]], axis=1)
            t = block(t, f"up{i}", 1)
        return ad.sigmoid(ad.conv2d(t, p["out_w"], p["out_b"], stride=1, padding=1))

    def translate(self, blended, reference) -> np.ndarray:
        """Convenience inference on a single (H, W, 3) float image pair."""
        x = np.concatenate(
            [to_chw(blended), to_chw(reference)], axis=0
        )[None]
        with ad.no_grad():
            out = self.forward(ad.Tensor(x))
        return to_hwc(out.data[0])


def to_chw(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, C) image, got {image.shape}")
    return np.moveaxis(image, 2, 0)


def to_hwc(image) -> np.ndarray:
    return np.moveaxis(np.asarray(image), 0, 2)


def generator_forward(blended, reference, model: Generator) -> np.ndarray:
    """Translate one (H, W, 3) blended/reference pair to an output frame."""
    return model.translate(blended, reference)


class FeatureStack:
    """Fixed, seeded, untrained conv features for perceptual/style distances.

    Three stride-2 conv+relu layers; the weights never train, so the stack is
    a deterministic function of its seed.
    """

    def __init__(self, seed=0, in_channels=3, widths=(8, 16, 32)):
        rng = np.random.default_rng(seed)
        self.weights = []
        c_prev = in_channels
        for c_out in widths:
            w = _he_conv(rng, c_out, c_prev)
            w.flags.writeable = False
            self.weights.append(ad.Tensor(w))
            c_prev = c_out

    def features(self, x) -> list:
        """Per-layer activations of (B, 3, H, W) input; gradients flow to x only."""
        x = ad._lift(x)
        feats = []
        t = x
        for w in self.weights:
            t = ad.relu(ad.conv2d(t, w, stride=2, padding=1))
            feats.append(t)
        return feats


def photometric_loss(pred, target) -> ad.Tensor:
    """Mean absolute pixel error."""
    pred, target = ad._lift(pred), ad._lift(target)
    if pred.shape != target.shape:
        raise ValueError(f"image shapes differ: {pred.shape} vs {target.shape}")
    return ad.mean(ad.absolute(ad.sub(pred, target)))


def pyramid_downsample(image, levels=3) -> list:
    """Box-filter pyramid over NCHW tensors: level 0 is the input itself."""
    image = ad._lift(image)
    if image.ndim != 4:
        raise ValueError(f"expected NCHW input, got shape {image.shape}")
    out = [image]
    for _ in range(levels - 1):
        t = out[-1]
        if t.shape[2] % 2 or t.shape[3] % 2:
            raise ValueError(
                f"level of size {t.shape[2]}x{t.shape[3]} not divisible by 2"
            )
        quads = [
            t[:, :, 0::2, 0::2],
            t[:, :, 0::2, 1::2],
            t[:, :, 1::2, 0::2],
            t[:, :, 1::2, 1::2],
        ]
        acc = quads[0]
        for q in quads[1:]:
            acc = ad.add(acc, q)
        out.append(ad.mul(acc, 0.25))
    return out


def perceptual_loss(pred, target, stack: FeatureStack, levels=3) -> ad.Tensor:
    """Sum over pyramid levels and stack layers of mean absolute feature error."""
    pred, target = ad._lift(pred), ad._lift(target)
    total = None
    for p_level, t_level in zip(
        pyramid_downsample(pred, levels), pyramid_downsample(target, levels)
    ):
        for f_p, f_t in zip(stack.features(p_level), stack.features(t_level)):
            term = ad.mean(ad.absolute(ad.sub(f_p, f_t)))
            total = term if total is None else ad.add(total, term)
    return total


def gram_matrix(features) -> ad.Tensor:
    """Channel inner products of (C, H, W) or (B, C, H, W) features, / (C*H*W)."""
    features = ad._lift(features)
    if features.ndim == 3:
        c, h, w = features.shape
        flat = ad.reshape(features, (c, h * w))
        return ad.mul(ad.matmul(flat, ad.transpose(flat)), 1.0 / (c * h * w))
    if features.ndim == 4:
        b, c, h, w = features.shape
        flat = ad.reshape(features, (b, c, h * w))
        return ad.mul(
            ad.matmul(flat, ad.transpose(flat, (0, 2, 1))), 1.0 / (c * h * w)
        )
    raise ValueError(f"expected (C,H,W) or (B,C,H,W) features, got {features.shape}")


def style_loss(pred, target, stack: FeatureStack) -> ad.Tensor:
    """Sum over stack layers of mean absolute Gram-matrix differences."""
    pred, target = ad._lift(pred), ad._lift(target)
    total = None
    for f_p, f_t in zip(stack.features(pred), stack.features(target)):
        term = ad.mean(ad.absolute(ad.sub(gram_matrix(f_p), gram_matrix(f_t))))
        total = term if total is None else ad.add(total, term)
    return total


def total_loss(pred, target, weights: LossWeights, stack: FeatureStack, levels=3):
    """Weighted photometric + perceptual + style objective."""
    photo = photometric_loss(pred, target)
    perc = perceptual_loss(pred, target, stack, levels=levels)
    style = style_loss(pred, target, stack)
    return ad.add(
        ad.add(ad.mul(photo, weights.photometric), ad.mul(perc, weights.perceptual)),
        ad.mul(style, weights.style),
    )


_CONFIG_FIELDS = ("in_channels", "base_width", "depth", "out_channels", "use_skips")


def save_generator(path, model: Generator):
    """Checkpoint weights plus the config scalars needed to rebuild the model."""
    from .formats import save_checkpoint

    arrays = {
        f"config/{f}": np.float64(float(getattr(model.config, f))) for f in _CONFIG_FIELDS
    }
    arrays.update({name: p.data for name, p in model.params.items()})
    save_checkpoint(path, arrays)


def load_generator(path) -> Generator:
    from .formats import load_checkpoint

    arrays = load_checkpoint(path)
    values = {f: arrays.pop(f"config/{f}") for f in _CONFIG_FIELDS}
    config = GeneratorConfig(
        in_channels=int(values["in_channels"]),
        base_width=int(values["base_width"]),
        depth=int(values["depth"]),
        out_channels=int(values["out_channels"]),
        use_skips=bool(values["use_skips"]),
    )
    model = Generator(config, seed=0)
    for name, param in model.params.items():
        if name not in arrays:
            raise ValueError(f"checkpoint missing parameter '{name}'")
        if arrays[name].shape != param.data.shape:
            raise ValueError(
                f"checkpoint parameter '{name}' has shape {arrays[name].shape}, "
                f"expected {param.data.shape}"
            )
        param.data = arrays[name]
    return model


def train_generator(
    triples,
    config: GeneratorConfig,
    weights: LossWeights | None = None,
    steps: int = 500,
    lr: float = 1e-4,
    seed: int = 0,
    stack_seed: int = 0,
    levels: int = 3,
):
    """Overfit the generator on (blended, reference, target) HWC image triples.

    All triples form one batch; Adam runs `steps` updates.  Returns
    (model, losses) with one total-loss value per step.  Bit-reproducible for
    fixed seeds.
    """
    triples = list(triples)
    if not triples:
        raise ValueError("empty training dataset")
    weights = weights if weights is not None else LossWeights()

    x = np.stack(
        [np.concatenate([to_chw(b), to_chw(r)], axis=0) for b, r, _ in triples]
    )
    y = np.stack([to_chw(t) for _, _, t in triples])

    model = Generator(config, rng=np.random.default_rng(seed))
    stack = FeatureStack(seed=stack_seed)
    opt = ad.Adam(model.params.values(), lr=lr)
    losses = []
    x_t = ad.Tensor(x)
    y_t = ad.Tensor(y)
    for _ in range(steps):
        pred = model.forward(x_t)
        loss = total_loss(pred, y_t, weights, stack, levels=levels)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
        losses.append(loss.item())
    return model, losses
