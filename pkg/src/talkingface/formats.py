"""File formats: face bases, images, audio, coefficient sequences, checkpoints.

All binary layouts are little-endian.  Readers track byte offsets and report
them in errors; save/load round-trips are bit-exact (float payloads are
32-bit on disk, so in-memory arrays built from float32 values survive
unchanged).

Formats:
  * FB3D face basis: magic "FB3D", u16 version, u32 N/k_id/k_exp/k_tex/
    triangle-count, f32 mean_shape, mean_texture, bases (column-major),
    u32 triangle indices.
  * GSWT weight checkpoint: magic "GSWT", u16 version, then records of
    (u32 name length, utf-8 name, u32 rank, u32 dims..., f32 data).
  * Images: binary PPM (P6, maxval 255) for color, PGM (P5) for masks/depth.
  * Audio: RIFF WAV, PCM16 mono 16 kHz only.
  * Coefficient sequences: JSON lines, one frame per line with a required
    "beta" plus optional "alpha"/"delta"/"rotation"/"translation".
"""

from __future__ import annotations

import json
import struct
import wave
from pathlib import Path

import numpy as np

from .facemodel import CoeffSet, FaceBasis

FB3D_MAGIC = b"FB3D"
GSWT_MAGIC = b"GSWT"
FORMAT_VERSION = 1
WAV_RATE = 16000


class FormatError(ValueError):
    """Malformed or truncated file."""


class _Reader:
    def __init__(self, f, name):
        self.f = f
        self.name = name
        self.offset = 0

    def read(self, n, what):
        data = self.f.read(n)
        if len(data) != n:
            raise FormatError(
                f"{self.name}: truncated while reading {what} at byte {self.offset}: "
                f"expected {n} bytes, got {len(data)}"
            )
        self.offset += n
        return data

    def read_struct(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.read(size, what))

    def read_f32(self, count, what):
        data = self.read(4 * count, what)
        return np.frombuffer(data, dtype="<f4").astype(np.float64)

    def read_u32(self, count, what):
        data = self.read(4 * count, what)
        return np.frombuffer(data, dtype="<u4").astype(np.int64)

    def at_eof(self):
        probe = self.f.read(1)
        if probe:
            self.f.seek(-1, 1)
            return False
        return True


def _check_magic(reader, magic):
    got = reader.read(len(magic), "magic")
    if got != magic:
        raise FormatError(f"{reader.name}: bad magic {got!r}, expected {magic!r}")
    (version,) = reader.read_struct("<H", "version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{reader.name}: unsupported version {version}")


# ---------------------------------------------------------------------------
# face basis


def save_face_basis(path, basis: FaceBasis):
    path = Path(path)
    with open(path, "wb") as f:
        f.write(FB3D_MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        f.write(
            struct.pack(
                "<5I",
                basis.n_vertices,
                basis.k_id,
                basis.k_exp,
                basis.k_tex,
                basis.triangles.shape[0],
            )
        )
        for arr in (basis.mean_shape, basis.mean_texture):
            f.write(arr.astype("<f4").tobytes())
        for arr in (basis.basis_id, basis.basis_exp, basis.basis_tex):
            f.write(arr.astype("<f4").ravel(order="F").tobytes())
        f.write(basis.triangles.astype("<u4").tobytes())


def load_face_basis(path) -> FaceBasis:
    path = Path(path)
    with open(path, "rb") as f:
        r = _Reader(f, path.name)
        _check_magic(r, FB3D_MAGIC)
        n, k_id, k_exp, k_tex, n_tri = r.read_struct("<5I", "header counts")
        n3 = 3 * n
        mean_shape = r.read_f32(n3, "mean_shape")
        mean_texture = r.read_f32(n3, "mean_texture")
        basis_id = r.read_f32(n3 * k_id, "basis_id").reshape((n3, k_id), order="F")
        basis_exp = r.read_f32(n3 * k_exp, "basis_exp").reshape((n3, k_exp), order="F")
        basis_tex = r.read_f32(n3 * k_tex, "basis_tex").reshape((n3, k_tex), order="F")
        triangles = r.read_u32(3 * n_tri, "triangles").reshape(n_tri, 3)
        if not r.at_eof():
            raise FormatError(f"{path.name}: trailing data after byte {r.offset}")
    return FaceBasis(
        mean_shape=mean_shape,
        mean_texture=mean_texture,
        basis_id=basis_id,
        basis_exp=basis_exp,
        basis_tex=basis_tex,
        triangles=triangles,
    )


# ---------------------------------------------------------------------------
# images


def _to_u8(image):
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img
    return np.round(np.clip(img.astype(np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path, image):
    """Binary P6 image; float input in [0,1] is quantized to maxval 255."""
    img = _to_u8(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM wants (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def write_pgm(path, image):
    """Binary P5 grayscale; masks/images with values in [0, 1] scale to 0..255."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"PGM wants (H, W), got {img.shape}")
    if img.max(initial=0) <= 1:
        img = np.round(img.astype(np.float64) * 255.0).astype(np.uint8)
    elif img.dtype != np.uint8:
        img = _to_u8(img.astype(np.float64) / 255.0)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def _read_netpbm(path, magic):
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(magic):
        raise FormatError(f"{path.name}: expected {magic.decode()} header")
    # header: magic, width, height, maxval as whitespace-separated tokens
    tokens = []
    pos = len(magic)
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path.name}: truncated header at byte {start}")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    w, h, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise FormatError(f"{path.name}: only maxval 255 supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    need = w * h * channels
    payload = data[pos : pos + need]
    if len(payload) != need:
        raise FormatError(
            f"{path.name}: truncated pixel data at byte {pos}: expected {need} bytes, "
            f"got {len(payload)}"
        )
    img = np.frombuffer(payload, dtype=np.uint8)
    return img.reshape((h, w, 3) if channels == 3 else (h, w))


def read_ppm(path) -> np.ndarray:
    return _read_netpbm(path, b"P6")


def read_pgm(path) -> np.ndarray:
    return _read_netpbm(path, b"P5")


# ---------------------------------------------------------------------------
# audio


def write_wav(path, samples):
    samples = np.asarray(samples)
    if samples.dtype != np.int16:
        raise ValueError(f"WAV writer wants int16 samples, got {samples.dtype}")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(WAV_RATE)
        f.writeframes(samples.tobytes())


def read_wav(path) -> np.ndarray:
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise FormatError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise FormatError(f"{path}: expected PCM16, got sample width {f.getsampwidth()}")
        if f.getframerate() != WAV_RATE:
            raise FormatError(
                f"{path}: expected {WAV_RATE} Hz, got {f.getframerate()} (resample first)"
            )
        frames = f.readframes(f.getnframes())
    return np.frombuffer(frames, dtype="<i2")


# ---------------------------------------------------------------------------
# coefficient sequences


def save_coeff_sequence(path, coeffs):
    with open(path, "w") as f:
        for c in coeffs:
            f.write(
                json.dumps(
                    {
                        "alpha": c.alpha.tolist(),
                        "beta": c.beta.tolist(),
                        "delta": c.delta.tolist(),
                        "rotation": c.rotation.tolist(),
                        "translation": c.translation.tolist(),
                    }
                )
            )
            f.write("\n")


def load_coeff_sequence(path, k_exp=None) -> list:
    coeffs = []
    expected = k_exp
    with open(path) as f:
        for lineno, line in enumerate(f):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}: frame {lineno}: invalid JSON ({e})") from None
            if "beta" not in record:
                raise FormatError(f"{path}: frame {lineno}: missing 'beta'")
            beta = np.asarray(record["beta"], dtype=np.float64)
            if expected is None:
                expected = beta.shape[0]
            if beta.shape != (expected,):
                raise FormatError(
                    f"{path}: frame {lineno}: beta has length {beta.shape[0]}, "
                    f"expected {expected}"
                )
            coeffs.append(
                CoeffSet(
                    alpha=np.asarray(record.get("alpha", []), dtype=np.float64),
                    beta=beta,
                    delta=np.asarray(record.get("delta", []), dtype=np.float64),
                    rotation=np.asarray(record.get("rotation", [0.0, 0.0, 0.0]), dtype=np.float64),
                    translation=np.asarray(
                        record.get("translation", [0.0, 0.0, 0.0]), dtype=np.float64
                    ),
                )
            )
    if not coeffs:
        raise FormatError(f"{path}: no frames")
    return coeffs


# ---------------------------------------------------------------------------
# weight checkpoints


def save_checkpoint(path, arrays: dict):
    """Write named float arrays; values are stored as f32."""
    with open(path, "wb") as f:
        f.write(GSWT_MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f4").tobytes())


def load_checkpoint(path) -> dict:
    path = Path(path)
    arrays = {}
    with open(path, "rb") as f:
        r = _Reader(f, path.name)
        _check_magic(r, GSWT_MAGIC)
        while not r.at_eof():
            (name_len,) = r.read_struct("<I", "name length")
            name = r.read(name_len, "name").decode("utf-8")
            (rank,) = r.read_struct("<I", f"rank of '{name}'")
            dims = r.read_struct(f"<{rank}I", f"dims of '{name}'") if rank else ()
            count = int(np.prod(dims)) if dims else 1
            data = r.read_f32(count, f"data of '{name}'")
            arrays[name] = data.reshape(dims)
    return arrays


# ---------------------------------------------------------------------------
# configuration files


def parse_config_file(path) -> dict:
    """key=value lines; blanks and #-comments ignored.  Values stay strings."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}: line {lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


# ---------------------------------------------------------------------------
# clip directories


def save_clip(directory, clip):
    """Persist a ClipBundle as coeffs.jsonl + audio.wav + frames/ + meta.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "frames").mkdir(exist_ok=True)
    save_coeff_sequence(directory / "coeffs.jsonl", clip.coeffs)
    write_wav(directory / "audio.wav", clip.waveform)
    for i, frame in enumerate(clip.frames):
        write_ppm(directory / "frames" / f"frame_{i:06d}.ppm", frame)
    meta = {
        "frames": clip.n_frames,
        "reference_index": clip.reference_index,
        "identity": clip.identity,
        "fps": clip.fps,
        "sample_rate": clip.sample_rate,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_clip(directory):
    from .synthetic import ClipBundle

    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    coeffs = load_coeff_sequence(directory / "coeffs.jsonl")
    waveform = read_wav(directory / "audio.wav")
    frames = [
        read_ppm(directory / "frames" / f"frame_{i:06d}.ppm")
        for i in range(meta["frames"])
    ]
    return ClipBundle(
        coeffs=coeffs,
        waveform=waveform,
        frames=frames,
        reference_index=meta["reference_index"],
        identity=meta["identity"],
        fps=meta["fps"],
        sample_rate=meta["sample_rate"],
    )
