"""Segmentation agreement of generated (or ground-truth) images with their layouts."""
import numpy as np

from . import autodiff as ad
from .synth import confusion, one_hot, oracle_segment, scores_from_confusion


def generate_images(generator, layouts, batch=8):
    out = []
    with ad.no_grad():
        for i in range(0, len(layouts), batch):
            out.append(generator(one_hot(layouts[i:i + batch], generator.cfg.classes)).data)
    return np.concatenate(out)


def evaluate_images(images, layouts, styles, classes):
    """Aggregate accuracy / mIoU from the pooled confusion matrix, plus per-sample scores."""
    seg = oracle_segment(images, styles)
    total = np.zeros((classes, classes), dtype=np.int64)
    per_sample = []
    for i, (pred, truth) in enumerate(zip(seg, layouts)):
        cm = confusion(pred, truth, classes)
        total += cm
        acc, miou = scores_from_confusion(cm)
        per_sample.append({"index": i, "accuracy": acc, "miou": miou})
    acc, miou = scores_from_confusion(total)
    return {"accuracy": acc, "miou": miou, "samples": per_sample}


def evaluate_generator(generator, dataset, batch=8):
    images = generate_images(generator, dataset.layouts, batch)
    return evaluate_images(images, dataset.layouts, dataset.styles, dataset.classes)
