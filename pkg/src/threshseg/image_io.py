"""Raster input/output: PGM/PPM/PNG loading, label maps, masks and overlays."""

from __future__ import annotations

import colorsys
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
CONTOUR_COLOR = (255, 0, 0)
BASE_PALETTE = [
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
]


class ImageReadError(Exception):
    """Base class for image loading failures."""


class UnreadableImageError(ImageReadError):
    pass


class UnsupportedFormatError(ImageReadError):
    pass


class CorruptImageError(ImageReadError):
    pass


@dataclass
class RawImage:
    """Integer samples with shape (height, width, channels)."""

    samples: np.ndarray
    max_value: int = 255

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 2:
            s = s[:, :, None]
        if s.ndim != 3 or s.shape[2] not in (1, 3):
            raise ValueError(f"expected 1 or 3 channels, got shape {s.shape}")
        self.samples = s

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def channels(self) -> int:
        return self.samples.shape[2]


_NETPBM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\d+)")


def _read_netpbm(data: bytes, path) -> RawImage:
    magic = data[:2]
    channels = 1 if magic == b"P5" else 3
    pos = 2
    header = []
    for _ in range(3):
        m = _NETPBM_TOKEN.match(data, pos)
        if m is None:
            raise CorruptImageError(f"{path}: malformed {magic.decode()} header")
        header.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = header
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise CorruptImageError(f"{path}: malformed {magic.decode()} header")
    pos += 1
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise CorruptImageError(f"{path}: invalid header values {header}")
    if maxval > 255:
        raise UnsupportedFormatError(f"{path}: 16-bit samples are not supported")
    expected = width * height * channels
    body = data[pos:pos + expected]
    if len(body) < expected:
        raise CorruptImageError(f"{path}: truncated pixel data ({len(body)} of {expected} bytes)")
    samples = np.frombuffer(body, dtype=np.uint8).reshape(height, width, channels).copy()
    return RawImage(samples, maxval)


def _read_png(path) -> RawImage:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "F"):
                raise UnsupportedFormatError(f"{path}: 16-bit or float PNGs are not supported")
            if mode in ("L", "1", "LA") or (mode == "P" and _palette_is_gray(im)):
                im = im.convert("L")
            else:
                im = im.convert("RGB")
            return RawImage(np.asarray(im, dtype=np.uint8).copy(), 255)
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise CorruptImageError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise CorruptImageError(f"{path}: {exc}") from exc


def _palette_is_gray(im) -> bool:
    rgb = np.asarray(im.convert("RGB"))
    return bool(np.all(rgb[..., 0] == rgb[..., 1]) and np.all(rgb[..., 1] == rgb[..., 2]))


def load_image(path) -> RawImage:
    """Read a P5/P6 netpbm or 8-bit PNG file, preserving sample values."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise UnreadableImageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if data[:2] in (b"P5", b"P6"):
        return _read_netpbm(data, path)
    if data[:8] == PNG_SIGNATURE:
        return _read_png(path)
    if len(data) < 8 and (PNG_SIGNATURE.startswith(data) or data[:1] == b"P"):
        raise CorruptImageError(f"{path}: file too short to hold an image header")
    raise UnsupportedFormatError(f"{path}: not a PGM (P5), PPM (P6) or PNG file")


def normalize(img: RawImage) -> np.ndarray:
    """Map samples affinely from [0, max_value] to [0, 1] as float64 (h, w, c)."""
    return img.samples.astype(np.float64) / float(img.max_value)


def to_raw(values: np.ndarray) -> RawImage:
    """Quantize a [0, 1] field back to 8-bit samples (values are clipped)."""
    return RawImage(np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8), 255)


def palette(n: int) -> list[tuple[int, int, int]]:
    if n <= len(BASE_PALETTE):
        return BASE_PALETTE[:n]
    extra = []
    for i in range(n - len(BASE_PALETTE)):
        r, g, b = colorsys.hsv_to_rgb((i * 0.618034) % 1.0, 0.65, 0.9)
        extra.append((int(r * 255), int(g * 255), int(b * 255)))
    return BASE_PALETTE + extra


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 2 or not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("label map must be a 2-D integer array")
    if labels.min() < 0 or labels.max() > 255:
        raise ValueError("label values must lie in [0, 255] for PNG output")
    return labels


def write_label_map(labels, path, colors=None, n: int | None = None) -> None:
    """Write labels as a palette PNG: pixel indices are the labels themselves."""
    labels = _check_labels(labels)
    n = n or int(labels.max()) + 1
    colors = list(colors) if colors is not None else palette(n)
    if len(colors) < n:
        raise ValueError(f"palette has {len(colors)} colours for {n} phases")
    im = Image.fromarray(labels.astype(np.uint8), mode="P")
    flat = [c for rgb in colors[:n] for c in rgb]
    im.putpalette(flat + [0] * (768 - len(flat)))
    im.save(path, format="PNG", optimize=False)


def read_label_map(path) -> np.ndarray:
    """Read a label map written by :func:`write_label_map` (or any 8-bit gray PNG)."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("P", "L"):
                raise UnsupportedFormatError(f"{path}: label maps must be palette or gray images")
            return np.asarray(im, dtype=np.uint8).astype(np.intp)
    except FileNotFoundError as exc:
        raise UnreadableImageError(f"cannot read {path}: {exc.strerror}") from exc
    except (UnidentifiedImageError, SyntaxError) as exc:
        raise CorruptImageError(f"{path}: {exc}") from exc


def write_pnm(img: RawImage, path) -> None:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n%d\n" % (magic, img.width, img.height, img.max_value)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(img.samples, dtype=np.uint8).tobytes())


def write_png(img: RawImage, path) -> None:
    s = img.samples[:, :, 0] if img.channels == 1 else img.samples
    Image.fromarray(np.ascontiguousarray(s, dtype=np.uint8)).save(path, format="PNG")


def write_phase_masks(labels, n: int, outdir) -> list[Path]:
    """One binary PGM per phase named phase_<i>.pgm, 255 inside."""
    labels = np.asarray(labels)
    outdir = Path(outdir)
    paths = []
    for i in range(n):
        p = outdir / f"phase_{i}.pgm"
        write_pnm(RawImage(np.where(labels == i, 255, 0).astype(np.uint8)), p)
        paths.append(p)
    return paths


def boundary_mask(labels) -> np.ndarray:
    """Pixels with a 4-neighbour of different label (no wrap-around)."""
    labels = np.asarray(labels)
    edge = np.zeros(labels.shape, dtype=bool)
    dy = labels[1:, :] != labels[:-1, :]
    dx = labels[:, 1:] != labels[:, :-1]
    edge[1:, :] |= dy
    edge[:-1, :] |= dy
    edge[:, 1:] |= dx
    edge[:, :-1] |= dx
    return edge


def contour_overlay(img: RawImage, labels, color=CONTOUR_COLOR) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (img.height, img.width):
        raise ValueError(f"image is {img.height}x{img.width} but labels are "
                         f"{labels.shape[0]}x{labels.shape[1]}")
    rgb = img.samples
    if img.channels == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    if img.max_value != 255:
        rgb = np.round(rgb.astype(float) * 255.0 / img.max_value)
    out = rgb.astype(np.uint8)
    out[boundary_mask(labels)] = color
    return out


def write_contour_overlay(img: RawImage, labels, path, color=CONTOUR_COLOR) -> None:
    Image.fromarray(contour_overlay(img, labels, color)).save(path, format="PNG")


def ensure_dir(path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    return path
