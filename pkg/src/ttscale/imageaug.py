"""Classical image augmentation pipelines at three strengths.

Each pipeline draws 3 distinct transforms from a fixed catalog and applies
them sequentially, honoring per-transform application probabilities.
Implementations match the named semantics (jitter, blur, geometric
distortion, dropout, ...) without claiming bit-exactness with any
particular library. Geometric fills use constant gray 144.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import cv2
import numpy as np

from .core import TTScaleError

GEOMETRIC_FILL = 144

STRENGTHS = ("low", "medium", "high")


class EmptyImageError(TTScaleError, ValueError):
    """Input image is missing, empty, or not HxWx3 uint8."""


@dataclass(frozen=True)
class TransformSpec:
    """One catalog entry: transform name, parameter ranges, apply probability."""

    name: str
    apply_prob: float
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError("apply_prob must be in [0, 1]")
        if self.name not in _TRANSFORMS:
            raise ValueError(f"unknown transform {self.name!r}")


def _check_image(image: np.ndarray) -> np.ndarray:
    if image is None:
        raise EmptyImageError("image is None")
    img = np.asarray(image)
    if img.size == 0 or img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise EmptyImageError(f"expected non-empty HxWx3 uint8 image, got {img.dtype} {img.shape}")
    return np.ascontiguousarray(img)


# -- individual transforms -----------------------------------------------------
# All take (uint8 RGB image, rng, **params) and return uint8 RGB.


def _brightness_contrast(img, rng, brightness_limit=0.2, contrast_limit=0.2):
    b = rng.uniform(-brightness_limit, brightness_limit)
    c = rng.uniform(-contrast_limit, contrast_limit)
    out = img.astype(np.float32) * (1.0 + c) + b * 255.0
    return np.clip(out, 0, 255).astype(np.uint8)


def _safe_rotate(img, rng, limit=20.0):
    # Rotate without clipping corners, then resize back to the input size.
    angle = rng.uniform(-limit, limit)
    h, w = img.shape[:2]
    center = (w / 2.0, h / 2.0)
    mat = cv2.getRotationMatrix2D(center, angle, 1.0)
    cos, sin = abs(mat[0, 0]), abs(mat[0, 1])
    bw = int(round(h * sin + w * cos))
    bh = int(round(h * cos + w * sin))
    mat[0, 2] += bw / 2.0 - center[0]
    mat[1, 2] += bh / 2.0 - center[1]
    rotated = cv2.warpAffine(
        img, mat, (bw, bh), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=(GEOMETRIC_FILL,) * 3,
    )
    return cv2.resize(rotated, (w, h), interpolation=cv2.INTER_LINEAR)


def _gaussian_blur(img, rng, blur_limit=(3, 7)):
    lo, hi = blur_limit
    k = int(rng.integers(lo // 2, hi // 2 + 1)) * 2 + 1  # odd kernel in [lo, hi]
    return cv2.GaussianBlur(img, (k, k), 0)


def _clahe(img, rng, clip_limit=4.0):
    limit = rng.uniform(1.0, clip_limit)
    lab = cv2.cvtColor(img, cv2.COLOR_RGB2LAB)
    clahe = cv2.createCLAHE(clipLimit=limit, tileGridSize=(8, 8))
    lab[:, :, 0] = clahe.apply(lab[:, :, 0])
    return cv2.cvtColor(lab, cv2.COLOR_LAB2RGB)


def _gamma(img, rng, gamma_limit=(80, 120)):
    g = rng.uniform(*gamma_limit) / 100.0
    lut = (np.power(np.arange(256, dtype=np.float32) / 255.0, g) * 255.0).astype(np.uint8)
    return lut[img]


def _hue_saturation_value(img, rng, hue_shift_limit=20, sat_shift_limit=30, val_shift_limit=20):
    hsv = cv2.cvtColor(img, cv2.COLOR_RGB2HSV).astype(np.int16)
    hsv[:, :, 0] = (hsv[:, :, 0] + int(rng.uniform(-hue_shift_limit, hue_shift_limit))) % 180
    hsv[:, :, 1] = np.clip(hsv[:, :, 1] + int(rng.uniform(-sat_shift_limit, sat_shift_limit)), 0, 255)
    hsv[:, :, 2] = np.clip(hsv[:, :, 2] + int(rng.uniform(-val_shift_limit, val_shift_limit)), 0, 255)
    return cv2.cvtColor(hsv.astype(np.uint8), cv2.COLOR_HSV2RGB)


def _random_scale(img, rng, scale_limit=0.1):
    f = 1.0 + rng.uniform(-scale_limit, scale_limit)
    h, w = img.shape[:2]
    nw, nh = max(1, int(round(w * f))), max(1, int(round(h * f)))
    return cv2.resize(img, (nw, nh), interpolation=cv2.INTER_LINEAR)


def _rgb_shift(img, rng, r_shift_limit=20, g_shift_limit=20, b_shift_limit=20):
    shifts = [
        int(rng.uniform(-r_shift_limit, r_shift_limit)),
        int(rng.uniform(-g_shift_limit, g_shift_limit)),
        int(rng.uniform(-b_shift_limit, b_shift_limit)),
    ]
    out = img.astype(np.int16) + np.array(shifts, dtype=np.int16)
    return np.clip(out, 0, 255).astype(np.uint8)


def _median_blur(img, rng, blur_limit=3):
    return cv2.medianBlur(img, int(blur_limit))


def _jpeg_compression(img, rng, quality_range=(85, 95)):
    q = int(rng.integers(quality_range[0], quality_range[1] + 1))
    ok, buf = cv2.imencode(".jpg", cv2.cvtColor(img, cv2.COLOR_RGB2BGR), [cv2.IMWRITE_JPEG_QUALITY, q])
    if not ok:
        raise ValueError("JPEG encoding failed")
    return cv2.cvtColor(cv2.imdecode(buf, cv2.IMREAD_COLOR), cv2.COLOR_BGR2RGB)


def _sharpen(img, rng, alpha=(0.2, 0.5), lightness=(0.5, 1.0)):
    a = rng.uniform(*alpha)
    l = rng.uniform(*lightness)
    base = np.array([[-1, -1, -1], [-1, 8 + l, -1], [-1, -1, -1]], dtype=np.float32) / l
    identity = np.zeros((3, 3), dtype=np.float32)
    identity[1, 1] = 1.0
    kernel = (1.0 - a) * identity + a * base
    return np.clip(cv2.filter2D(img.astype(np.float32), -1, kernel), 0, 255).astype(np.uint8)


def _planckian_jitter(img, rng, temp_range=(3000, 9000)):
    # Blackbody-style white-balance shift: warm temperatures raise red and
    # lower blue, cool ones do the opposite.
    t = rng.uniform(*temp_range)
    s = (6500.0 - t) / 3500.0 * 0.25
    gains = np.array([1.0 + s, 1.0, 1.0 - s], dtype=np.float32)
    return np.clip(img.astype(np.float32) * gains, 0, 255).astype(np.uint8)


def _fog(img, rng, alpha_coef=0.15):
    a = alpha_coef * rng.uniform(0.5, 1.5)
    out = img.astype(np.float32) * (1.0 - a) + 220.0 * a
    return np.clip(out, 0, 255).astype(np.uint8)


def _tone_curve(img, rng, scale=0.1):
    low = np.clip(rng.normal(0.25, scale), 0.0, 1.0)
    high = np.clip(rng.normal(0.75, scale), 0.0, 1.0)
    t = np.arange(256, dtype=np.float32) / 255.0
    curve = 3 * t * (1 - t) ** 2 * low + 3 * t**2 * (1 - t) * high + t**3
    lut = np.clip(curve * 255.0, 0, 255).astype(np.uint8)
    return lut[img]


def _emboss(img, rng, alpha=(0.2, 0.5), strength=(0.2, 0.7)):
    a = rng.uniform(*alpha)
    s = rng.uniform(*strength)
    kernel = np.array([[-1 - s, 0 - s, 0], [0 - s, 1, 0 + s], [0, 0 + s, 1 + s]], dtype=np.float32)
    embossed = np.clip(cv2.filter2D(img.astype(np.float32), -1, kernel), 0, 255)
    out = (1.0 - a) * img.astype(np.float32) + a * embossed
    return np.clip(out, 0, 255).astype(np.uint8)


def _axis_map(rng, size, num_steps, distort_limit):
    # Monotone piecewise-linear coordinate map with per-cell stretch.
    steps = 1.0 + rng.uniform(-distort_limit, distort_limit, size=num_steps)
    xs = np.linspace(0, size, num_steps + 1)
    ys = np.concatenate([[0.0], np.cumsum(steps * np.diff(xs))])
    ys *= size / ys[-1]
    return np.interp(np.arange(size, dtype=np.float32), ys, xs).astype(np.float32)


def _grid_distortion(img, rng, num_steps=5, distort_limit=0.3):
    h, w = img.shape[:2]
    map_x = np.tile(_axis_map(rng, w, num_steps, distort_limit), (h, 1))
    map_y = np.tile(_axis_map(rng, h, num_steps, distort_limit)[:, None], (1, w))
    return cv2.remap(img, map_x, map_y, interpolation=cv2.INTER_LINEAR,
                     borderMode=cv2.BORDER_REFLECT_101)


def _perspective(img, rng, scale=0.05, fit_output=True):
    h, w = img.shape[:2]
    src = np.array([[0, 0], [w, 0], [w, h], [0, h]], dtype=np.float32)
    jitter = rng.uniform(-scale, scale, size=(4, 2)).astype(np.float32) * np.array([w, h], dtype=np.float32)
    dst = src + jitter
    if fit_output:
        dst -= dst.min(axis=0)
        out_w = max(1, int(np.ceil(dst[:, 0].max())))
        out_h = max(1, int(np.ceil(dst[:, 1].max())))
    else:
        out_w, out_h = w, h
    mat = cv2.getPerspectiveTransform(src, dst)
    return cv2.warpPerspective(
        img, mat, (out_w, out_h), flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT, borderValue=(GEOMETRIC_FILL,) * 3,
    )


def _grid_dropout(img, rng, ratio=0.25, random_offset=True, units=8):
    out = img.copy()
    h, w = img.shape[:2]
    unit_h, unit_w = max(1, h // units), max(1, w // units)
    hole_h, hole_w = max(1, int(unit_h * ratio)), max(1, int(unit_w * ratio))
    off_y = int(rng.integers(0, unit_h)) if random_offset else 0
    off_x = int(rng.integers(0, unit_w)) if random_offset else 0
    for y in range(off_y, h, unit_h):
        for x in range(off_x, w, unit_w):
            out[y : y + hole_h, x : x + hole_w] = GEOMETRIC_FILL
    return out


def _coarse_dropout(img, rng, hole_fraction=(0.05, 0.15), num_holes=(4, 8)):
    out = img.copy()
    h, w = img.shape[:2]
    n = int(rng.integers(num_holes[0], num_holes[1] + 1))
    for _ in range(n):
        hh = max(1, int(h * rng.uniform(*hole_fraction)))
        hw = max(1, int(w * rng.uniform(*hole_fraction)))
        y = int(rng.integers(0, max(1, h - hh + 1)))
        x = int(rng.integers(0, max(1, w - hw + 1)))
        out[y : y + hh, x : x + hw] = GEOMETRIC_FILL
    return out


_TRANSFORMS: dict[str, Callable] = {
    "brightness_contrast": _brightness_contrast,
    "safe_rotate": _safe_rotate,
    "gaussian_blur": _gaussian_blur,
    "clahe": _clahe,
    "gamma": _gamma,
    "hue_saturation_value": _hue_saturation_value,
    "random_scale": _random_scale,
    "rgb_shift": _rgb_shift,
    "median_blur": _median_blur,
    "jpeg_compression": _jpeg_compression,
    "sharpen": _sharpen,
    "planckian_jitter": _planckian_jitter,
    "fog": _fog,
    "tone_curve": _tone_curve,
    "emboss": _emboss,
    "grid_distortion": _grid_distortion,
    "perspective": _perspective,
    "grid_dropout": _grid_dropout,
    "coarse_dropout": _coarse_dropout,
}


def _spec(name: str, p: float, **params) -> TransformSpec:
    return TransformSpec(name=name, apply_prob=p, params=params)


_HIGH = (
    _spec("brightness_contrast", 0.6),
    _spec("safe_rotate", 0.6, limit=20.0),
    _spec("gaussian_blur", 0.6, blur_limit=(3, 7)),
    _spec("clahe", 0.5),
    _spec("gamma", 0.6),
    _spec("hue_saturation_value", 0.6),
    _spec("random_scale", 0.6, scale_limit=0.1),
    _spec("rgb_shift", 0.6),
    _spec("median_blur", 0.6, blur_limit=3),
    _spec("jpeg_compression", 0.45, quality_range=(85, 95)),
    _spec("sharpen", 0.6),
    _spec("planckian_jitter", 0.5),
    _spec("fog", 0.5, alpha_coef=0.15),
    _spec("tone_curve", 0.5),
    _spec("emboss", 0.5),
    _spec("grid_distortion", 0.5),
    _spec("perspective", 0.5, scale=0.05, fit_output=True),
    _spec("grid_dropout", 0.66, ratio=0.25, random_offset=True),
    _spec("coarse_dropout", 0.7),
)

_MEDIUM = (
    _spec("brightness_contrast", 0.5, brightness_limit=0.2, contrast_limit=0.2),
    _spec("safe_rotate", 0.5, limit=15.0),
    _spec("gaussian_blur", 0.5, blur_limit=(3, 7)),
    _spec("clahe", 0.4, clip_limit=3.0),
    _spec("gamma", 0.5, gamma_limit=(80, 120)),
    _spec("hue_saturation_value", 0.5, hue_shift_limit=15, sat_shift_limit=15, val_shift_limit=15),
    _spec("random_scale", 0.5, scale_limit=0.08),
    _spec("rgb_shift", 0.5, r_shift_limit=15, g_shift_limit=15, b_shift_limit=15),
    _spec("median_blur", 0.5, blur_limit=3),
    _spec("jpeg_compression", 0.35, quality_range=(85, 95)),
    _spec("sharpen", 0.5, alpha=(0.2, 0.5), lightness=(0.6, 1.0)),
    _spec("planckian_jitter", 0.5),
    _spec("fog", 0.3, alpha_coef=0.1),
    _spec("tone_curve", 0.5, scale=0.2),
    _spec("emboss", 0.5, alpha=(0.2, 0.5), strength=(0.5, 0.7)),
    _spec("grid_distortion", 0.5, num_steps=5, distort_limit=0.2),
    _spec("perspective", 0.5, scale=0.03, fit_output=True),
    _spec("grid_dropout", 0.6, ratio=0.25, random_offset=True),
    _spec("coarse_dropout", 0.5),
)

_LOW = (
    _spec("brightness_contrast", 0.3, brightness_limit=0.1, contrast_limit=0.1),
    _spec("safe_rotate", 0.3, limit=10.0),
    _spec("gaussian_blur", 0.3, blur_limit=(3, 5)),
    _spec("clahe", 0.3, clip_limit=2.0),
    _spec("gamma", 0.3, gamma_limit=(90, 110)),
    _spec("hue_saturation_value", 0.3, hue_shift_limit=10, sat_shift_limit=10, val_shift_limit=10),
    _spec("random_scale", 0.3, scale_limit=0.05),
    _spec("rgb_shift", 0.3, r_shift_limit=10, g_shift_limit=10, b_shift_limit=10),
    _spec("median_blur", 0.3, blur_limit=3),
    _spec("jpeg_compression", 0.25, quality_range=(85, 95)),
    _spec("sharpen", 0.3, alpha=(0.1, 0.3), lightness=(0.7, 1.0)),
    _spec("planckian_jitter", 0.3),
    _spec("fog", 0.2, alpha_coef=0.05),
    _spec("tone_curve", 0.3, scale=0.1),
    _spec("emboss", 0.3, alpha=(0.1, 0.3), strength=(0.3, 0.5)),
    _spec("grid_distortion", 0.3, num_steps=5, distort_limit=0.1),
    _spec("perspective", 0.3, scale=0.02, fit_output=True),
)

_CATALOGS = {"low": _LOW, "medium": _MEDIUM, "high": _HIGH}


def catalog(strength: str) -> list[TransformSpec]:
    """The fixed transform catalog for one augmentation strength."""
    if strength not in _CATALOGS:
        raise ValueError(f"unknown strength {strength!r}, expected one of {STRENGTHS}")
    return list(_CATALOGS[strength])


def apply_image_aug(image: np.ndarray, strength: str, seed: int) -> np.ndarray:
    """Augment one image: pick 3 distinct catalog transforms, apply in order.

    Each selected transform still honors its own apply probability, so a
    draw can leave the image untouched. Deterministic for a fixed
    (image, strength, seed) triple.

    Raises:
        EmptyImageError: image is missing, empty, or not HxWx3 uint8.
    """
    img = _check_image(image)
    specs = catalog(strength)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(specs), size=3, replace=False)
    for idx in chosen:
        spec = specs[int(idx)]
        if rng.random() < spec.apply_prob:
            img = _TRANSFORMS[spec.name](img, rng, **spec.params)
    return np.ascontiguousarray(img)


def load_image(path: str) -> np.ndarray:
    """Read a PNG/JPEG file as HxWx3 uint8 RGB."""
    bgr = cv2.imread(path, cv2.IMREAD_COLOR)
    if bgr is None:
        raise EmptyImageError(f"cannot read image: {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def save_png(image: np.ndarray, path: str) -> None:
    img = _check_image(image)
    if not cv2.imwrite(path, cv2.cvtColor(img, cv2.COLOR_RGB2BGR)):
        raise IOError(f"cannot write image: {path}")
