"""Two-stage training loop with a deterministic per-iteration rng scheme.

Stage 1 optimizes the label + position reconstruction loss; from
``stage1_iters`` on, the boundary-perceiving term joins with weight
``boundary_weight``. All randomness for iteration ``it`` comes from
generators seeded by (seed, it, stream), so a run is bit-reproducible and a
resumed run continues the exact stream of a straight-through run.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .assoc import AssociationMap, task_loss_parts
from .augment import AugmentConfig, patch_shuffle, random_shift
from .autodiff import AdamState, Graph
from .bploss import boundary_loss
from .checkpoint import Checkpoint, save_checkpoint
from .errors import ConfigError, TrainingDiverged
from .grid import grid_init
from .labels import LabelMap

AUG_PROB = 0.5  # per-op, per-sample application probability


@dataclass
class TrainConfig:
    lr: float = 4e-4
    batch: int = 4
    total_iters: int = 600
    lr_halving_period: int = 300
    position_weight: float = 0.003 / 16
    boundary_weight: float = 0.5
    stage1_iters: int = 450
    crop: int = 64
    seed: int = 1
    max_patches: int = 32
    augment: AugmentConfig | None = None
    # Decoupled weight decay (0 = plain Adam). Desk-scale runs need it: with
    # no normalization layers, confidence growth otherwise saturates the
    # 9-way softmax within ~50 iterations and freezes learning.
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.stage1_iters > self.total_iters:
            raise ConfigError(
                f"stage1_iters ({self.stage1_iters}) exceeds total_iters "
                f"({self.total_iters})"
            )
        if self.lr <= 0 or self.batch < 1 or self.lr_halving_period < 1:
            raise ConfigError("lr, batch and lr_halving_period must be positive")
        if self.position_weight < 0 or self.boundary_weight < 0:
            raise ConfigError("loss weights must be >= 0")


@dataclass
class TraceRow:
    iteration: int
    total: float
    ce: float
    pos: float
    bpl: float


def lr_at(cfg, iteration):
    """Step-decayed learning rate: halved every ``lr_halving_period`` iters."""
    return cfg.lr * 0.5 ** (iteration // cfg.lr_halving_period)


def _iter_rng(seed, iteration, stream):
    return np.random.default_rng(np.random.PCG64(np.random.SeedSequence([seed, iteration, stream])))


def assemble_batch(dataset, cfg, S, iteration):
    """The batch for one iteration: sample, crop, augment (stream 0)."""
    rng = _iter_rng(cfg.seed, iteration, 0)
    if cfg.crop % S:
        raise ConfigError(f"crop {cfg.crop} is not divisible by S={S}")
    indices = rng.integers(0, len(dataset), size=cfg.batch)
    batch = []
    for idx in indices:
        sample = dataset[int(idx)]
        img = sample.image
        labels = sample.labels
        h, w = labels.ids.shape
        if h < cfg.crop or w < cfg.crop:
            raise ConfigError(
                f"sample {sample.identifier} is {h}x{w}, smaller than crop {cfg.crop}"
            )
        if (h, w) != (cfg.crop, cfg.crop):
            oy = int(rng.integers(0, h - cfg.crop + 1))
            ox = int(rng.integers(0, w - cfg.crop + 1))
            img = img[oy : oy + cfg.crop, ox : ox + cfg.crop]
            labels = LabelMap(
                labels.ids[oy : oy + cfg.crop, ox : ox + cfg.crop], labels.num_classes
            )
        if cfg.augment is not None:
            if cfg.augment.shuffle and rng.random() < AUG_PROB:
                img, labels = patch_shuffle(img, labels, cfg.augment, rng)
            if cfg.augment.shift and rng.random() < AUG_PROB:
                direction = "horizontal" if rng.integers(2) == 0 else "vertical"
                img, labels = random_shift(img, labels, cfg.augment, direction, rng)
        batch.append((np.ascontiguousarray(img), labels))
    return batch


def _mean_terms(terms):
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.mul(total, 1.0 / len(terms))


def train(
    model,
    dataset,
    cfg,
    adam=None,
    start_iteration=0,
    checkpoint_path=None,
    checkpoint_every=500,
):
    """Run the schedule from ``start_iteration``; returns (Checkpoint, trace).

    Periodic checkpoints go to ``<stem>_iterNNNNNN<suffix>`` next to
    ``checkpoint_path``; the final state lands on ``checkpoint_path`` itself.
    Aborts with ``TrainingDiverged`` naming the first non-finite loss term.
    """
    if not dataset:
        raise ConfigError("training needs a non-empty dataset")
    cfg_s = model.config.S
    if cfg.crop % cfg_s:
        raise ConfigError(f"crop {cfg.crop} is not divisible by S={cfg_s}")
    grid = grid_init(cfg.crop, cfg.crop, cfg_s)
    params = model.params
    if adam is None:
        adam = AdamState.for_params(params)
    trace = []
    ckpt_path = Path(checkpoint_path) if checkpoint_path else None

    for it in range(start_iteration, cfg.total_iters):
        batch = assemble_batch(dataset, cfg, cfg_s, it)
        imgs = np.stack([img for img, _ in batch])
        boundary_on = it >= cfg.stage1_iters and cfg.boundary_weight > 0
        with Graph() as graph:
            q_all, e_all, _ = model.forward(imgs)
            ce_terms, pos_terms, bpl_terms = [], [], []
            for i, (_, labels) in enumerate(batch):
                q_i = ad.take_item(q_all, i)
                ce_i, pos_i = task_loss_parts(AssociationMap(q_i), labels, grid)
                ce_terms.append(ce_i)
                pos_terms.append(pos_i)
                if boundary_on:
                    rng_p = _iter_rng(cfg.seed, it, 1 + i)
                    bpl_terms.append(
                        boundary_loss(
                            ad.take_item(e_all, i),
                            labels,
                            model.config.K,
                            cfg.max_patches,
                            rng_p,
                        )
                    )
            ce = _mean_terms(ce_terms)
            pos = _mean_terms(pos_terms)
            loss = ad.add(ce, ad.mul(pos, cfg.position_weight))
            bpl_value = 0.0
            if boundary_on:
                bpl = _mean_terms(bpl_terms)
                loss = ad.add(loss, ad.mul(bpl, cfg.boundary_weight))
                bpl_value = float(bpl.data)
            row = TraceRow(
                iteration=it,
                total=float(loss.data),
                ce=float(ce.data),
                pos=float(pos.data),
                bpl=bpl_value,
            )
            for term, value in (
                ("cross-entropy", row.ce),
                ("position", row.pos),
                ("boundary", row.bpl),
                ("total", row.total),
            ):
                if not math.isfinite(value):
                    raise TrainingDiverged(
                        f"{term} loss became non-finite ({value}) at iteration {it}"
                    )
            graph.backward(loss, params=params.values())
        grads = {name: p.grad for name, p in params.items()}
        lr = lr_at(cfg, it)
        ad.adam_step(params, grads, adam, lr)
        if cfg.weight_decay > 0:
            shrink = 1.0 - lr * cfg.weight_decay
            for p in params.values():
                p.data *= shrink
        for p in params.values():
            p.grad = None
        trace.append(row)

        done = it + 1
        if ckpt_path and done % checkpoint_every == 0 and done < cfg.total_iters:
            step_path = ckpt_path.with_name(f"{ckpt_path.stem}_iter{done:06d}{ckpt_path.suffix}")
            save_checkpoint(step_path, model, adam, iteration=done, seed=cfg.seed)

    if ckpt_path:
        save_checkpoint(ckpt_path, model, adam, iteration=cfg.total_iters, seed=cfg.seed)
    ckpt = Checkpoint(
        version=1,
        config=model.config,
        params={name: p.data.copy() for name, p in params.items()},
        iteration=cfg.total_iters,
        seed=cfg.seed,
        adam=adam,
    )
    return ckpt, trace


def write_loss_csv(trace, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iter,loss,ce,pos,bpl\n")
        for row in trace:
            fh.write(
                f"{row.iteration},{row.total:.9g},{row.ce:.9g},"
                f"{row.pos:.9g},{row.bpl:.9g}\n"
            )
