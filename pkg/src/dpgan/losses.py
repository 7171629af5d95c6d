"""Hinge adversarial, feature-matching, perceptual and pixel losses."""
from dataclasses import asdict, dataclass

from . import autodiff as ad
from .errors import ContractError


@dataclass
class LossWeights:
    gan: float = 1.0
    feat: float = 10.0
    perceptual: float = 10.0

    def __post_init__(self):
        if min(self.gan, self.feat, self.perceptual) < 0:
            raise ContractError("loss weights must be non-negative")

    def to_dict(self):
        return asdict(self)


def _mean_over(terms):
    terms = list(terms)
    return ad.scale(ad.add_scalars(terms), 1.0 / len(terms))


def hinge_real(logits):
    return ad.mean(ad.relu(ad.shift(ad.scale(logits, -1.0), 1.0)))


def hinge_fake(logits):
    return ad.mean(ad.relu(ad.shift(logits, 1.0)))


def adversarial_d(real_logits, fake_logits):
    """Discriminator hinge loss averaged over scales."""
    if len(real_logits) != len(fake_logits):
        raise ContractError("real and fake logits must cover the same scales")
    return _mean_over(ad.add(hinge_real(r), hinge_fake(f)) for r, f in zip(real_logits, fake_logits))


def adversarial_g(fake_logits):
    return ad.scale(_mean_over(ad.mean(f) for f in fake_logits), -1.0)


def adversarial_hinge(real_logits, fake_logits, side):
    if side == "D":
        return adversarial_d(real_logits, fake_logits)
    if side == "G":
        return adversarial_g(fake_logits)
    raise ContractError(f"side must be 'G' or 'D', got {side!r}")


def mean_l1(a, b):
    return ad.scale(ad.l1_distance(a, b), 1.0 / a.size)


def feature_matching(real_feats, fake_feats):
    """Mean over scales and layers of the per-element L1 distance; real side detached."""
    if len(real_feats) != len(fake_feats):
        raise ContractError("feature lists differ in number of scales")
    terms = []
    for real_layers, fake_layers in zip(real_feats, fake_feats):
        if len(real_layers) != len(fake_layers):
            raise ContractError("feature lists differ in number of layers")
        terms.extend(mean_l1(f, r.detach()) for r, f in zip(real_layers, fake_layers))
    return _mean_over(terms)


def perceptual(net, real, fake):
    """Mean over the net's taps of the per-element L1 distance between activations."""
    return _mean_over(mean_l1(a, b) for a, b in zip(net(real), net(fake)))


def total_generator(weights, gan, feat, perc):
    terms = []
    for w, t in ((weights.gan, gan), (weights.feat, feat), (weights.perceptual, perc)):
        if t is not None:
            terms.append(ad.scale(t, w))
    return ad.add_scalars(terms)
