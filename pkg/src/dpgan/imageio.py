"""8-bit PNG encoding of [-1, 1] images and class-index layouts."""
import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageFormatError


def to_uint8(x):
    """Map [-1, 1] to [0, 255] affinely, rounding half away from zero."""
    v = (np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0) + 1.0) * 127.5
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.uint8)


def from_uint8(q):
    return np.asarray(q, dtype=np.float64) / 127.5 - 1.0


def save_image(path, image):
    """Write a (3, H, W) or (1, 3, H, W) array in [-1, 1] as RGB PNG."""
    arr = np.asarray(image)
    if arr.ndim == 4:
        if arr.shape[0] != 1:
            raise ImageFormatError(f"can only save one image at a time, got batch of {arr.shape[0]}")
        arr = arr[0]
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ImageFormatError(f"expected a (3, H, W) image, got shape {arr.shape}")
    Image.fromarray(to_uint8(arr).transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def load_image(path):
    """Read an RGB image as a (3, H, W) float array in [-1, 1]."""
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode != "RGB":
                raise ImageFormatError(f"{path}: expected RGB image, got mode {im.mode}")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"{path}: cannot decode image ({exc})") from exc
    return from_uint8(arr.transpose(2, 0, 1))


def save_layout(path, layout):
    grid = np.asarray(layout)
    if grid.ndim != 2:
        raise ImageFormatError(f"layout must be 2-D, got shape {grid.shape}")
    if grid.min(initial=0) < 0 or grid.max(initial=0) > 255:
        raise ImageFormatError("layout class indices must fit in 0..255")
    Image.fromarray(grid.astype(np.uint8), mode="L").save(path, format="PNG")


def load_layout(path):
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode not in ("L", "P"):
                raise ImageFormatError(f"{path}: layout must be a single-channel image, got mode {im.mode}")
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageFormatError(f"{path}: cannot decode layout ({exc})") from exc
    return arr.astype(np.int64)
