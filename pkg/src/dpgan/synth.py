"""Seeded synthetic layouts with blocks and long thin strips, their renders,
an exact colour-matching segmenter, and segmentation metrics.

Class ids for the default ``K = 5``: 0 background, 1 square block,
2 wide rectangle, 3 horizontal strip, 4 vertical strip. Extra classes
(``K > 5``) are drawn as additional blocks.
"""
import itertools
import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError
from .imageio import load_image, load_layout, save_image, save_layout

BACKGROUND, SQUARE, WIDE, HSTRIP, VSTRIP = range(5)
MIN_SIZE = 16
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class ClassStyle:
    color: tuple
    amplitude: float
    frequency: float  # cycles per pixel
    axis: int  # 0: varies along rows (y), 1: along columns (x)

    def to_dict(self):
        d = asdict(self)
        d["color"] = list(self.color)
        return d


def _palette(k):
    # cube corners, background first; any two differ by >= 1.6 in L1
    order = [(-0.8, -0.8, -0.8), (0.8, 0.8, -0.8), (0.8, -0.8, 0.8), (-0.8, 0.8, 0.8),
             (0.8, -0.8, -0.8), (-0.8, 0.8, -0.8), (-0.8, -0.8, 0.8), (0.8, 0.8, 0.8)]
    if k <= 8:
        return order[:k], 0.2
    grid = list(itertools.product((-0.8, 0.0, 0.8), repeat=3))
    if k > len(grid):
        raise ContractError(f"at most {len(grid)} classes are supported, got {k}")
    # with separation 0.8 the texture must stay below 0.8 / 6 per channel
    return grid[:k], 0.13


def default_styles(k):
    """Per-class colours pairwise >= 0.8 apart in L1, with textures small enough
    that nearest-colour segmentation of a render is exact."""
    colors, amp = _palette(k)
    return [ClassStyle(tuple(c), amp, 1.0 / (4 + (i % 3)), i % 2) for i, c in enumerate(colors)]


def min_separation(styles):
    cols = np.array([s.color for s in styles])
    if len(cols) < 2:
        return np.inf
    d = np.abs(cols[:, None, :] - cols[None, :, :]).sum(-1)
    return float(d[~np.eye(len(cols), dtype=bool)].min())


def sample_seed(base_seed, index):
    """Independent per-sample seed, so samples can be generated in any order."""
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def generate_layout(seed, size=64, classes=5):
    if size < MIN_SIZE:
        raise ContractError(f"layout size must be >= {MIN_SIZE} to place strips, got {size}")
    if classes < 5:
        raise ContractError(f"layouts need at least 5 classes (two strip classes), got {classes}")
    rng = np.random.default_rng(seed)
    grid = np.zeros((size, size), dtype=np.int64)
    block_classes = [SQUARE, WIDE] + list(range(5, classes))
    for _ in range(rng.integers(2, 6)):
        cls = int(rng.choice(block_classes))
        if cls == WIDE:
            h = int(rng.integers(size // 8, size // 4 + 1))
            w = int(rng.integers(2 * h, max(2 * h, size // 2) + 1))
        else:
            h = w = int(rng.integers(size // 8, size // 3 + 1))
        y, x = int(rng.integers(0, size - h + 1)), int(rng.integers(0, size - w + 1))
        grid[y:y + h, x:x + w] = cls
    lo = -(-3 * size // 4)
    thick = int(rng.integers(1, 4))
    length = int(rng.integers(lo, size + 1))
    y, x = int(rng.integers(0, size - thick + 1)), int(rng.integers(0, size - length + 1))
    grid[y:y + thick, x:x + length] = HSTRIP
    thick = int(rng.integers(1, 4))
    length = int(rng.integers(lo, size + 1))
    y, x = int(rng.integers(0, size - length + 1)), int(rng.integers(0, size - thick + 1))
    grid[y:y + length, x:x + thick] = VSTRIP
    return grid


def render_ground_truth(layout, styles):
    """(3, H, W) image: class colour plus a sinusoid along the class's axis, clamped to [-1, 1]."""
    layout = np.asarray(layout)
    k = int(layout.max()) + 1
    if k > len(styles):
        raise ContractError(f"layout uses class {k - 1} but only {len(styles)} styles are defined")
    h, w = layout.shape
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((3, h, w))
    for cls, st in enumerate(styles):
        mask = layout == cls
        if not mask.any():
            continue
        coord = yy if st.axis == 0 else xx
        tex = st.amplitude * np.sin(2 * np.pi * st.frequency * coord)
        for c in range(3):
            img[c][mask] = st.color[c] + tex[mask]
    return np.clip(img, -1.0, 1.0)


def one_hot(layout, classes):
    """(N, K, H, W) tensor from an (H, W) or (N, H, W) class grid."""
    grid = np.asarray(layout)
    if grid.ndim == 2:
        grid = grid[None]
    if grid.min() < 0 or grid.max() >= classes:
        raise ContractError(f"layout class indices must lie in [0, {classes}), got max {grid.max()}")
    return ad.Tensor(np.eye(classes)[grid].transpose(0, 3, 1, 2))


def oracle_segment(image, styles):
    """Nearest base colour in L1 per pixel; ties go to the lower class index."""
    img = np.asarray(image.data if isinstance(image, ad.Tensor) else image)
    squeeze = img.ndim == 3
    if squeeze:
        img = img[None]
    cols = np.array([s.color for s in styles])
    d = np.abs(img[:, None, :, :, :] - cols[None, :, :, None, None]).sum(axis=2)
    seg = d.argmin(axis=1)
    return seg[0] if squeeze else seg


def confusion(pred, truth, classes):
    pred, truth = np.asarray(pred).ravel(), np.asarray(truth).ravel()
    return np.bincount(truth * classes + pred, minlength=classes * classes).reshape(classes, classes)


def scores_from_confusion(cm):
    total = cm.sum()
    acc = float(np.trace(cm) / total) if total else 0.0
    inter = np.diag(cm).astype(np.float64)
    union = cm.sum(0) + cm.sum(1) - inter
    present = union > 0
    miou = float((inter[present] / union[present]).mean()) if present.any() else 0.0
    return acc, miou


def metrics(pred, truth):
    """(pixel accuracy, mIoU over classes present in pred or truth)."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ContractError(f"metrics: shape mismatch {pred.shape} vs {truth.shape}")
    k = int(max(pred.max(), truth.max())) + 1
    return scores_from_confusion(confusion(pred, truth, k))


# -- dataset directory -------------------------------------------------------

@dataclass
class Dataset:
    layouts: np.ndarray  # (N, H, W) int
    images: np.ndarray  # (N, 3, H, W) float in [-1, 1], as decoded from disk
    styles: list
    manifest: dict

    @property
    def classes(self):
        return self.manifest["classes"]

    def __len__(self):
        return len(self.layouts)


def layout_name(i):
    return f"layout_{i:05d}.png"


def truth_name(i):
    return f"truth_{i:05d}.png"


def make_dataset(out, num, size=64, classes=5, seed=0, force=False):
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise FileExistsError(f"{out} exists and is not empty (use --force to overwrite)")
    if num < 1:
        raise ContractError("dataset needs at least one sample")
    if size < MIN_SIZE:
        raise ContractError(f"layout size must be >= {MIN_SIZE} to place strips, got {size}")
    os.makedirs(out, exist_ok=True)
    styles = default_styles(classes)
    files = []
    for i in range(num):
        layout = generate_layout(sample_seed(seed, i), size, classes)
        save_layout(os.path.join(out, layout_name(i)), layout)
        save_image(os.path.join(out, truth_name(i)), render_ground_truth(layout, styles))
        files.append({"layout": layout_name(i), "truth": truth_name(i)})
    manifest = {
        "count": num,
        "size": size,
        "classes": classes,
        "seed": seed,
        "styles": [s.to_dict() for s in styles],
        "files": files,
    }
    with open(os.path.join(out, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def styles_from_manifest(manifest):
    return [ClassStyle(tuple(s["color"]), s["amplitude"], s["frequency"], s["axis"]) for s in manifest["styles"]]


def load_dataset(path):
    mpath = os.path.join(path, MANIFEST)
    if not os.path.isfile(mpath):
        raise FileNotFoundError(f"no {MANIFEST} in {path}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    layouts = np.stack([load_layout(os.path.join(path, f["layout"])) for f in manifest["files"]])
    images = np.stack([load_image(os.path.join(path, f["truth"])) for f in manifest["files"]])
    return Dataset(layouts, images, styles_from_manifest(manifest), manifest)
