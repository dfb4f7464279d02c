"""Pairwise ranking training: negative sampling, BPR objective, RMSProp."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import GradientMap, Tape, Tensor
from .checkpoint import save_checkpoint
from .corpus import Item, Outfit, item_pool
from .errors import ConfigError, DivergenceError, SamplingError
from .features import FeatureStore
from .graph import FashionGraph
from .model import CompatibilityModel, GraphBatch, ModelConfig
from .seeding import stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    batch_size: int = 16
    lam: float = 0.001
    max_epochs: int = 20
    patience: int = 3
    min_delta: float = 1e-4
    seed: int = 0
    rho: float = 0.9
    eps: float = 1e-8
    reg_scope: str = "touched"  # or "global"
    max_retries: int = 1000

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not self.lr > 0:
            out.append(f"lr must be positive, got {self.lr!r}")
        if not self.lam >= 0:
            out.append(f"lam must be non-negative, got {self.lam!r}")
        if self.batch_size < 1:
            out.append(f"batch_size must be at least 1, got {self.batch_size!r}")
        if self.max_epochs < 1:
            out.append(f"max_epochs must be at least 1, got {self.max_epochs!r}")
        if self.patience < 0:
            out.append(f"patience must be non-negative, got {self.patience!r}")
        if not 0 <= self.rho < 1:
            out.append(f"rho must lie in [0, 1), got {self.rho!r}")
        if self.reg_scope not in ("touched", "global"):
            out.append(f"reg_scope must be 'touched' or 'global', got {self.reg_scope!r}")
        return out


@dataclass(frozen=True)
class TrainPair:
    positive: Outfit
    negative: Outfit
    slot: int


def sample_negative(outfit: Outfit, pool: Sequence[Item], rng: np.random.Generator,
                    max_retries: int = 1000) -> TrainPair:
    """Swap one uniformly chosen item for a uniformly drawn pool item.

    Draws are repeated until the replacement differs from the original item
    and its category is not already used by the other items.
    """
    if not pool:
        raise SamplingError("empty item pool")
    slot = int(rng.integers(len(outfit)))
    old = outfit.items[slot]
    taken = {it.category for k, it in enumerate(outfit.items) if k != slot}
    for _ in range(max_retries):
        cand = pool[int(rng.integers(len(pool)))]
        if cand.item_id != old.item_id and cand.category not in taken:
            return TrainPair(outfit, outfit.replace_item(slot, cand), slot)
    raise SamplingError(f"outfit {outfit.outfit_id}: no valid replacement after {max_retries} draws")


def bpr_loss(x_pos: Tensor, x_neg: Tensor) -> Tensor:
    """Sum of -ln sigmoid(x_pos - x_neg)."""
    return ad.scale(ad.reduce_sum(ad.log_sigmoid(ad.sub(x_pos, x_neg))), -1.0)


def l2_penalty(model: CompatibilityModel, batch: GraphBatch | None, scope: str = "touched") -> Tensor:
    """Sum of squared parameters.

    With ``scope="touched"`` only the node (or edge) slices used by ``batch``
    count, plus every shared tensor.
    """
    terms = []
    for params in model.channels.values():
        owned = params.node_owned()
        for name, t in params.tensors.items():
            if scope == "touched" and name in owned:
                if name == "W_e":
                    rows = batch.touched_edges(params.edge_ids)
                else:
                    rows = batch.touched_nodes()
                t = ad.take(t, rows)
            terms.append(ad.reduce_sum(ad.square(t)))
    return ad.sum_all(terms)


@dataclass(eq=False)
class LossParts:
    total: Tensor
    bpr: float
    con: float
    reg: float


def total_loss(model: CompatibilityModel, pairs: Sequence[TrainPair], features: Mapping[str, FeatureStore],
               lam: float, reg_scope: str = "touched") -> LossParts:
    """BPR over the pairs, plus the consistency term for multimodal models,
    plus (lam/2) times the squared parameter norm."""
    if not pairs:
        raise ConfigError("total_loss needs at least one pair")
    P = len(pairs)
    batch = GraphBatch.build([p.positive for p in pairs] + [p.negative for p in pairs], model.graph)
    out = model.forward(batch, features)
    pos = ad.take(out.scores, np.arange(P))
    neg = ad.take(out.scores, np.arange(P, 2 * P))
    bpr = bpr_loss(pos, neg)
    total = bpr
    con_v = 0.0
    if out.con is not None:
        total = ad.add(total, out.con)
        con_v = float(out.con.data)
    reg_v = 0.0
    if lam > 0:
        reg = l2_penalty(model, batch, reg_scope)
        total = ad.add(total, ad.scale(reg, lam / 2.0))
        reg_v = float(reg.data) * lam / 2.0
    return LossParts(total, float(bpr.data), con_v, reg_v)


@dataclass
class OptimizerState:
    lr: float = 0.001
    rho: float = 0.9
    eps: float = 1e-8
    acc: dict[str, np.ndarray] = field(default_factory=dict)


def rmsprop_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: OptimizerState,
                 row_sparse: frozenset[str] | set[str] = frozenset()) -> Mapping[str, np.ndarray]:
    """In-place RMSProp update.

    Tensors named in ``row_sparse`` are updated only on axis-0 slices whose
    gradient has a nonzero entry; any other tensor is skipped entirely when
    its gradient is all zero. Skipped slices keep both value and accumulator.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for parameter {name}")
        acc = state.acc.get(name)
        if acc is None:
            acc = state.acc[name] = np.zeros_like(p)
        if name in row_sparse and p.ndim > 0:
            rows = np.flatnonzero(np.any(g.reshape(g.shape[0], -1) != 0, axis=1))
            if rows.size == 0:
                continue
            gr = g[rows]
            acc[rows] = state.rho * acc[rows] + (1 - state.rho) * gr * gr
            p[rows] -= state.lr * gr / (np.sqrt(acc[rows]) + state.eps)
        else:
            if not np.any(g != 0):
                continue
            acc *= state.rho
            acc += (1 - state.rho) * g * g
            p -= state.lr * g / (np.sqrt(acc) + state.eps)
    return params


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    wall_time: float
    lr: float


@dataclass(eq=False)
class TrainResult:
    model: CompatibilityModel
    history: list[EpochRecord]
    best_epoch: int
    stopped_early: bool


def _apply_gradients(model: CompatibilityModel, grads: GradientMap, state: OptimizerState) -> None:
    params, g, sparse = {}, {}, set()
    for ch, cp in model.channels.items():
        owned = cp.node_owned()
        for name, t in cp.tensors.items():
            key = f"{ch}.{name}"
            params[key] = t.data
            g[key] = grads[t]
            if name in owned:
                sparse.add(key)
    rmsprop_step(params, g, state, sparse)


def pair_loss(model: CompatibilityModel, pairs: Sequence[TrainPair], features: Mapping[str, FeatureStore],
              batch_size: int = 256) -> float:
    """Mean BPR (+ consistency) per pair, no regularizer, no tape."""
    total = 0.0
    for start in range(0, len(pairs), batch_size):
        parts = total_loss(model, pairs[start:start + batch_size], features, lam=0.0)
        total += float(parts.total.data)
    return total / max(len(pairs), 1)


def train(train_outfits: Sequence[Outfit], valid_outfits: Sequence[Outfit], graph: FashionGraph,
          features: Mapping[str, FeatureStore], model_config: ModelConfig, config: TrainConfig,
          checkpoint_path=None, log_path=None, model: CompatibilityModel | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Mini-batch training with early stopping on validation loss.

    The returned model holds the parameters of the best validation epoch;
    when ``checkpoint_path`` is given that model is written there each time
    validation improves.
    """
    if not train_outfits:
        raise ConfigError("no training outfits")
    if not valid_outfits:
        raise ConfigError("no validation outfits")
    if model is None:
        dims = {name: features[name].dim for name in model_config.channels}
        model = CompatibilityModel.init(model_config, graph, dims, stream(config.seed, "init"))

    train_pool = item_pool(train_outfits)
    valid_rng = stream(config.seed, "valid")
    valid_pairs = [sample_negative(o, item_pool(valid_outfits) + train_pool, valid_rng, config.max_retries)
                   for o in valid_outfits]
    neg_rng = stream(config.seed, "negatives")
    shuffle_rng = stream(config.seed, "shuffle")
    opt = OptimizerState(config.lr, config.rho, config.eps)

    history: list[EpochRecord] = []
    best = np.inf
    best_model = model.copy()
    best_epoch = 0
    wait = 0
    stopped = False
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.monotonic()
            pairs = [sample_negative(o, train_pool, neg_rng, config.max_retries) for o in train_outfits]
            order = shuffle_rng.permutation(len(pairs))
            running = 0.0
            for start in range(0, len(order), config.batch_size):
                chunk = [pairs[k] for k in order[start:start + config.batch_size]]
                with Tape() as tape:
                    parts = total_loss(model, chunk, features, config.lam, config.reg_scope)
                loss = float(parts.total.data)
                if not np.isfinite(loss):
                    raise DivergenceError(f"loss became {loss} in epoch {epoch}")
                grads = tape.backward(parts.total)
                _apply_gradients(model, grads, opt)
                running += loss
            train_loss = running / len(pairs)
            valid_loss = pair_loss(model, valid_pairs, features)
            if not np.isfinite(valid_loss):
                raise DivergenceError(f"validation loss became {valid_loss} in epoch {epoch}")
            rec = EpochRecord(epoch, train_loss, valid_loss, time.monotonic() - t0, config.lr)
            history.append(rec)
            logger.info("epoch %d train %.5f valid %.5f (%.1fs)", epoch, train_loss, valid_loss, rec.wall_time)
            if log_fh:
                log_fh.write(json.dumps(asdict(rec)) + "\n")
                log_fh.flush()
            if on_epoch:
                on_epoch(rec)
            if valid_loss < best - config.min_delta:
                best = valid_loss
                best_model = model.copy()
                best_epoch = epoch
                wait = 0
                if checkpoint_path:
                    save_checkpoint(best_model, checkpoint_path,
                                    {"train_config": asdict(config), "best_epoch": epoch, "valid_loss": valid_loss})
            else:
                wait += 1
                if wait >= max(config.patience, 1):
                    stopped = True
                    break
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(best_model, history, best_epoch, stopped)


def read_metrics_log(path) -> list[EpochRecord]:
    return [EpochRecord(**json.loads(line)) for line in Path(path).read_text().splitlines() if line.strip()]
