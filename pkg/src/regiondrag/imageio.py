"""PNG loading/saving around the in-memory image type."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .core import ImageBuffer, ValidationError


def load_png(path) -> ImageBuffer:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(arr)


def save_png(image: ImageBuffer, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    to_pil(image).save(path, format="PNG")


def image_dims(path) -> tuple[int, int]:
    """(width, height) from the PNG header, without decoding pixel data."""
    with Image.open(path) as img:
        return img.size


def to_pil(image: ImageBuffer) -> Image.Image:
    arr = np.clip(np.rint(image.data * 255.0), 0, 255).astype(np.uint8)
    return Image.fromarray(arr, mode="RGB" if image.channels == 3 else None)


def encode_png_bytes(image: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    to_pil(image).save(buf, format="PNG")
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> ImageBuffer:
    try:
        with Image.open(io.BytesIO(data)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except Exception as exc:
        raise ValidationError(f"could not decode PNG payload: {exc}") from exc
    return ImageBuffer(arr)
