"""Training state, the per-step D/G updates, and checkpoint round-trips."""
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import losses, serialization
from .errors import CheckpointError, ContractError, NumericAbort
from .models import DiscriminatorConfig, Generator, GeneratorConfig, MultiScaleDiscriminator, PerceptualNet
from .synth import one_hot

MODES = ("gan", "reconstruction")
METRIC_KEYS = ("step", "loss_gan_d", "loss_gan_g", "loss_fm", "loss_l1", "loss_p", "total")


@dataclass
class TrainConfig:
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 4
    steps: int = 100
    seed: int = 0
    mode: str = "gan"
    perceptual_seed: int = 1234
    checkpoint_every: int = 0

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("Adam betas must lie in [0, 1)")
        if self.mode not in MODES:
            raise ContractError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 1 or self.steps < 0:
            raise ContractError("batch_size must be positive and steps non-negative")

    def to_dict(self):
        return asdict(self)


class TrainState:
    def __init__(self, gcfg, dcfg=None, weights=None, tcfg=None):
        self.gcfg = gcfg
        self.dcfg = dcfg or DiscriminatorConfig()
        self.weights = weights or losses.LossWeights()
        self.tcfg = tcfg or TrainConfig()
        self.generator = Generator(gcfg)
        self.discriminator = MultiScaleDiscriminator(self.dcfg, gcfg.image_channels, gcfg.classes)
        self.perceptual = PerceptualNet(gcfg.image_channels, seed=self.tcfg.perceptual_seed)
        self.step = 0
        self.rng = np.random.default_rng(self.tcfg.seed)

    def configs(self):
        return {
            "generator": self.gcfg.to_dict(),
            "discriminator": self.dcfg.to_dict(),
            "loss": self.weights.to_dict(),
            "train": self.tcfg.to_dict(),
        }


def sample_batch(state, dataset):
    """Draw a minibatch without replacement using the state's RNG."""
    n = len(dataset)
    k = min(state.tcfg.batch_size, n)
    idx = np.sort(state.rng.choice(n, size=k, replace=False))
    return one_hot(dataset.layouts[idx], dataset.classes), ad.Tensor(dataset.images[idx])


def _logits(outs):
    return [o[0] for o in outs]


def _feats(outs):
    return [o[1] for o in outs]


def _finite_or_abort(step, record):
    bad = {k: v for k, v in record.items() if v is not None and not np.isfinite(v)}
    if bad:
        raise NumericAbort(f"non-finite loss at step {step}: {bad}", step=step, metrics=record)


def train_step(state, batch):
    """One discriminator update (GAN mode) followed by one generator update."""
    onehot, real = batch
    tc, w = state.tcfg, state.weights
    g, d = state.generator, state.discriminator
    record = dict.fromkeys(METRIC_KEYS)
    record["step"] = state.step + 1

    fake = g(onehot)
    if tc.mode == "gan":
        d.set_trainable(True)
        d.zero_grad()
        loss_d = losses.adversarial_d(_logits(d(real, onehot)), _logits(d(fake.detach(), onehot)))
        record["loss_gan_d"] = loss_d.item()
        _finite_or_abort(record["step"], record)
        ad.backward(loss_d)
        ad.adam_step(d.parameters(), tc.lr_d, tc.beta1, tc.beta2, tc.eps)

        d.set_trainable(False)
        try:
            fake_out = d(fake, onehot)
            with ad.no_grad():
                real_out = d(real, onehot)
            gan = losses.adversarial_g(_logits(fake_out))
            fm = losses.feature_matching(_feats(real_out), _feats(fake_out))
            perc = losses.perceptual(state.perceptual, real, fake)
            total = losses.total_generator(w, gan, fm, perc)
        finally:
            d.set_trainable(True)
        record.update(loss_gan_g=gan.item(), loss_fm=fm.item())
    else:
        # pixel L1 takes the feature-matching slot; no adversarial term
        l1 = losses.mean_l1(fake, real)
        perc = losses.perceptual(state.perceptual, real, fake)
        total = ad.add_scalars([ad.scale(l1, w.feat), ad.scale(perc, w.perceptual)])
        record["loss_l1"] = l1.item()
    record.update(loss_p=perc.item(), total=total.item())
    _finite_or_abort(record["step"], record)

    g.zero_grad()
    ad.backward(total)
    ad.adam_step(g.parameters(), tc.lr_g, tc.beta1, tc.beta2, tc.eps)
    state.step += 1
    return record


# -- checkpoints -------------------------------------------------------------

def _modules(state):
    return {"G": state.generator, "D": state.discriminator}


def state_arrays(state):
    arrays, counters = {}, {}
    for prefix, module in _modules(state).items():
        for name, p in module.named_parameters():
            key = f"{prefix}/{name}"
            arrays[key] = p.data
            arrays[key + "/adam_m"] = p.m
            arrays[key + "/adam_v"] = p.v
            counters[key] = p.t
    return arrays, counters


def checkpoint_save(state, path):
    arrays, counters = state_arrays(state)
    meta = {
        "configs": state.configs(),
        "step": state.step,
        "adam_t": counters,
        "rng": state.rng.bit_generator.state,
    }
    serialization.save(path, arrays, meta)


def state_from_meta(meta):
    cfg = meta["configs"]
    return TrainState(
        GeneratorConfig(**cfg["generator"]),
        DiscriminatorConfig(**cfg["discriminator"]),
        losses.LossWeights(**cfg["loss"]),
        TrainConfig(**cfg["train"]),
    )


def checkpoint_load(path):
    """Rebuild a full training state; raises CheckpointError without side effects."""
    arrays, meta = serialization.load(path)
    try:
        state = state_from_meta(meta)
        updates = []
        for prefix, module in _modules(state).items():
            for name, p in module.named_parameters():
                key = f"{prefix}/{name}"
                vals = [arrays[key], arrays[key + "/adam_m"], arrays[key + "/adam_v"]]
                if any(v.shape != p.shape for v in vals):
                    raise CheckpointError(f"shape mismatch for {key}")
                updates.append((p, vals, int(meta["adam_t"][key])))
        for p, (value, m, v), t in updates:
            p.data, p.m, p.v, p.t = value, m, v, t
        state.step = int(meta["step"])
        state.rng.bit_generator.state = meta["rng"]
    except (KeyError, TypeError, ContractError) as exc:
        raise CheckpointError(f"checkpoint {path} is incomplete or inconsistent: {exc}") from exc
    return state


def _truncate_log(path, upto_step):
    """Drop log records past ``upto_step`` (left over from an interrupted run)."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except FileNotFoundError:
        return
    keep = [ln for ln in lines if ln.strip() and json.loads(ln)["step"] <= upto_step]
    with open(path, "w") as fh:
        fh.writelines(keep)


def fit(state, dataset, log_path=None, checkpoint_path=None, stop_after=None, on_step=None):
    """Train until ``tcfg.steps`` (or ``stop_after``) and return the metric records.

    Checkpoints are written every ``checkpoint_every`` steps and at the end.
    A non-finite loss raises NumericAbort before anything is saved, so the
    last checkpoint on disk is always from a finite step.
    """
    if dataset.classes != state.gcfg.classes:
        raise ContractError(f"dataset has {dataset.classes} classes, generator expects {state.gcfg.classes}")
    target = state.tcfg.steps if stop_after is None else min(stop_after, state.tcfg.steps)
    every = state.tcfg.checkpoint_every
    if log_path:
        _truncate_log(log_path, state.step)
    records = []
    log = open(log_path, "a") if log_path else None
    try:
        while state.step < target:
            rec = train_step(state, sample_batch(state, dataset))
            records.append(rec)
            if log:
                log.write(json.dumps(rec, sort_keys=True) + "\n")
                log.flush()
            if on_step:
                on_step(rec)
            if checkpoint_path and every and state.step % every == 0:
                checkpoint_save(state, checkpoint_path)
    finally:
        if log:
            log.close()
    if checkpoint_path:
        checkpoint_save(state, checkpoint_path)
    return records
