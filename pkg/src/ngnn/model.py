"""Graph compatibility models: NGNN and the GGNN / EGNN baselines.

Several outfits are scored together by treating their subgraphs as one
disjoint graph (:class:`GraphBatch`). Each item becomes a node instance that
reads the parameters of its category; messages only travel along edges
inside its own outfit, so a batch of one outfit is exactly the single-outfit
computation.

Matrices act on column vectors, ``W @ x``; node states are stored as rows,
so the code reads ``einsum("pq,mq->mp", W, h)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import Outfit
from .errors import ConfigError
from .features import FeatureStore
from .graph import FashionGraph, extract_subgraph

VARIANTS = ("NGNN", "GGNN", "EGNN")
MODALITIES = ("visual", "textual", "multimodal")
GRU_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_cand", "U_cand", "b_cand")


@dataclass(frozen=True)
class ModelConfig:
    d: int = 12
    T: int = 3
    variant: str = "NGNN"
    modality: str = "multimodal"
    beta: float = 0.2

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.d, int) or self.d < 1:
            out.append(f"d must be a positive integer, got {self.d!r}")
        if not isinstance(self.T, int) or self.T < 0:
            out.append(f"T must be a non-negative integer, got {self.T!r}")
        if self.variant not in VARIANTS:
            out.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.modality not in MODALITIES:
            out.append(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if not 0.0 <= self.beta <= 1.0:
            out.append(f"beta must lie in [0, 1], got {self.beta!r}")
        return out

    @property
    def channels(self) -> tuple[str, ...]:
        return ("visual", "textual") if self.modality == "multimodal" else (self.modality,)

    def to_dict(self) -> dict:
        return asdict(self)


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_out, fan_in = shape[-2], shape[-1]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


@dataclass(eq=False)
class ChannelParams:
    """Parameters of one NGNN channel.

    Node-owned matrices are stacked along axis 0 by category index
    (``W_h`` is N x d x F, ``W_in``/``W_out`` N x d x d). GGNN replaces the
    in/out stacks with one shared ``W_p``; EGNN uses one matrix per graph edge,
    ``W_e`` (E x d x d) ordered as :meth:`FashionGraph.edges`.
    """

    variant: str
    tensors: dict[str, Tensor]
    edge_ids: np.ndarray | None = None  # (N, N) edge position table for EGNN

    @classmethod
    def init(cls, variant: str, num_nodes: int, d: int, F: int, rng: np.random.Generator,
             graph: FashionGraph | None = None) -> "ChannelParams":
        if variant not in VARIANTS:
            raise ConfigError(f"unknown variant {variant!r}")
        t: dict[str, np.ndarray] = {"W_h": _glorot(rng, (num_nodes, d, F))}
        edge_ids = None
        if variant == "NGNN":
            t["W_in"] = _glorot(rng, (num_nodes, d, d))
            t["W_out"] = _glorot(rng, (num_nodes, d, d))
        elif variant == "GGNN":
            t["W_p"] = _glorot(rng, (d, d))
        else:
            if graph is None:
                raise ConfigError("EGNN parameters need the graph's edge set")
            t["W_e"] = _glorot(rng, (graph.num_edges, d, d))
            edge_ids = graph.edge_index()
        t["b_p"] = np.zeros(d)
        for gate in ("z", "r", "cand"):
            t[f"W_{gate}"] = _glorot(rng, (d, d))
            t[f"U_{gate}"] = _glorot(rng, (d, d))
            t[f"b_{gate}"] = np.zeros(d)
        t["theta_w"] = _glorot(rng, (1, d))
        t["theta_b"] = np.zeros(1)
        t["delta_w"] = _glorot(rng, (1, d))
        t["delta_b"] = np.zeros(1)
        return cls(variant, {k: Tensor(v, requires_grad=True, name=k) for k, v in t.items()}, edge_ids)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.tensors[name]
        except KeyError:
            raise ConfigError(f"{self.variant} parameters have no {name!r}") from None

    @property
    def d(self) -> int:
        return self.tensors["b_p"].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.tensors["W_h"].shape[2]

    @property
    def num_nodes(self) -> int:
        return self.tensors["W_h"].shape[0]

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def node_owned(self) -> tuple[str, ...]:
        """Names of tensors whose axis 0 indexes categories (or edges for W_e)."""
        names = ["W_h"]
        if self.variant == "NGNN":
            names += ["W_in", "W_out"]
        elif self.variant == "EGNN":
            names.append("W_e")
        return tuple(names)

    def copy(self) -> "ChannelParams":
        return ChannelParams(self.variant,
                             {k: Tensor(v.data.copy(), requires_grad=True, name=k) for k, v in self.tensors.items()},
                             None if self.edge_ids is None else self.edge_ids.copy())


# ---------------------------------------------------------------------------
# batching


@dataclass(eq=False)
class GraphBatch:
    """Disjoint union of outfit subgraphs."""

    outfits: list[Outfit]
    node_cat: np.ndarray   # (M,) category of every item instance
    owner: np.ndarray      # (M,) outfit position of every instance
    src: np.ndarray        # (E,) sending instance
    dst: np.ndarray        # (E,) receiving instance
    weight: np.ndarray     # (E,) A[cat(src), cat(dst)]
    _consts: dict = field(default_factory=dict)

    @classmethod
    def build(cls, outfits: Sequence[Outfit], graph: FashionGraph) -> "GraphBatch":
        cats, owner, src, dst, w = [], [], [], [], []
        base = 0
        for b, o in enumerate(outfits):
            sub = extract_subgraph(o, graph)
            n = len(sub)
            cats.append(sub.nodes)
            owner.append(np.full(n, b))
            # edge j -> i within the outfit
            j, i = np.nonzero(sub.adjacency)
            src.append(j + base)
            dst.append(i + base)
            w.append(sub.adjacency[j, i])
            base += n
        cat_arr = np.concatenate(cats) if cats else np.zeros(0, dtype=np.int64)
        return cls(
            list(outfits),
            cat_arr.astype(np.int64),
            np.concatenate(owner).astype(np.int64) if owner else np.zeros(0, dtype=np.int64),
            np.concatenate(src).astype(np.int64) if src else np.zeros(0, dtype=np.int64),
            np.concatenate(dst).astype(np.int64) if dst else np.zeros(0, dtype=np.int64),
            np.concatenate(w) if w else np.zeros(0),
        )

    @property
    def num_instances(self) -> int:
        return len(self.node_cat)

    @property
    def num_outfits(self) -> int:
        return len(self.outfits)

    def incidence(self) -> Tensor:
        """(M, E): entry [i, e] is the weight of edge e if it ends at i."""
        if "inc" not in self._consts:
            m = np.zeros((self.num_instances, len(self.src)))
            m[self.dst, np.arange(len(self.src))] = self.weight
            self._consts["inc"] = Tensor(m)
        return self._consts["inc"]

    def membership(self) -> Tensor:
        """(B, M) one-hot outfit membership."""
        if "mem" not in self._consts:
            m = np.zeros((self.num_outfits, self.num_instances))
            m[self.owner, np.arange(self.num_instances)] = 1.0
            self._consts["mem"] = Tensor(m)
        return self._consts["mem"]

    def features(self, store: FeatureStore, modality: str) -> Tensor:
        key = f"feat:{modality}:{id(store)}"
        if key not in self._consts:
            keys = [it.feature_key(modality) for o in self.outfits for it in o.items]
            self._consts[key] = Tensor(store.rows(keys))
        return self._consts[key]

    def touched_nodes(self) -> np.ndarray:
        return np.unique(self.node_cat)

    def touched_edges(self, edge_ids: np.ndarray) -> np.ndarray:
        return np.unique(edge_ids[self.node_cat[self.src], self.node_cat[self.dst]])


# ---------------------------------------------------------------------------
# forward pieces


@dataclass(eq=False)
class NodeState:
    h: Tensor                       # (M, d)
    latent_r: Tensor | None = None  # (M, d) pre-tanh latent representation
    a: Tensor | None = None
    update_gate: Tensor | None = None
    reset_gate: Tensor | None = None
    candidate: Tensor | None = None


def _lin(W: Tensor, x: Tensor) -> Tensor:
    return ad.einsum("pq,mq->mp", W, x)


def init_states(batch: GraphBatch, features: Tensor, params: ChannelParams) -> NodeState:
    """latent_r = W_h[c] f, h0 = tanh(latent_r) for every instance."""
    Wh = ad.take(params["W_h"], batch.node_cat)
    r = ad.einsum("mpq,mq->mp", Wh, features)
    return NodeState(h=ad.tanh(r), latent_r=r)


class _EdgeTransform:
    """Per-step message function; gathers edge matrices once per forward."""

    def __init__(self, batch: GraphBatch, params: ChannelParams, variant: str):
        if variant != params.variant:
            raise ConfigError(f"{params.variant} parameters used with variant {variant}")
        self.variant = variant
        cat_src = batch.node_cat[batch.src]
        cat_dst = batch.node_cat[batch.dst]
        if variant == "NGNN":
            self.w_in = ad.take(params["W_in"], cat_dst)
            self.w_out = ad.take(params["W_out"], cat_src)
        elif variant == "GGNN":
            self.w_p = params["W_p"]
        else:
            if params.edge_ids is None:
                raise ConfigError("EGNN parameters lack an edge table")
            ids = params.edge_ids[cat_src, cat_dst]
            if (ids < 0).any():
                raise ConfigError("batch uses an edge unknown to the EGNN parameters")
            self.w_e = ad.take(params["W_e"], ids)

    def __call__(self, h_src: Tensor) -> Tensor:
        if self.variant == "NGNN":
            # W_out[sender] @ (W_in[receiver] @ h_sender)
            u = ad.einsum("epq,eq->ep", self.w_in, h_src)
            return ad.einsum("epq,eq->ep", self.w_out, u)
        if self.variant == "GGNN":
            return ad.einsum("pq,eq->ep", self.w_p, h_src)
        return ad.einsum("epq,eq->ep", self.w_e, h_src)


def propagate_step(state: NodeState, batch: GraphBatch, params: ChannelParams, variant: str,
                   _transform: _EdgeTransform | None = None) -> NodeState:
    """One round of message passing followed by the GRU update."""
    transform = _transform or _EdgeTransform(batch, params, variant)
    h = state.h
    M = batch.num_instances
    msgs = transform(ad.take(h, batch.src))
    a = ad.add(ad.einsum("me,ep->mp", batch.incidence(), msgs), ad.tile_rows(params["b_p"], M))

    def gate(name):
        pre = ad.add(_lin(params[f"W_{name}"], a), _lin(params[f"U_{name}"], h))
        return ad.add(pre, ad.tile_rows(params[f"b_{name}"], M))

    z = ad.sigmoid(gate("z"))
    reset = ad.sigmoid(gate("r"))
    cand_pre = ad.add(ad.add(_lin(params["W_cand"], a), _lin(params["U_cand"], ad.mul(reset, h))),
                      ad.tile_rows(params["b_cand"], M))
    cand = ad.tanh(cand_pre)
    h_new = ad.add(ad.mul(cand, z), ad.mul(h, ad.one_minus(z)))
    return NodeState(h=h_new, latent_r=state.latent_r, a=a, update_gate=z, reset_gate=reset, candidate=cand)


@dataclass(eq=False)
class Readout:
    scores: Tensor        # (B, 1)
    attention: np.ndarray  # (M,)


def readout(state: NodeState, batch: GraphBatch, params: ChannelParams) -> Readout:
    """Score = sum over items of sigmoid(theta(h)) * leaky_relu(delta(h))."""
    M = batch.num_instances
    theta = ad.add(ad.einsum("kq,mq->mk", params["theta_w"], state.h), ad.tile_rows(params["theta_b"], M))
    delta = ad.add(ad.einsum("kq,mq->mk", params["delta_w"], state.h), ad.tile_rows(params["delta_b"], M))
    att = ad.sigmoid(theta)
    per_item = ad.mul(att, ad.leaky_relu(delta))
    scores = ad.einsum("bm,mk->bk", batch.membership(), per_item)
    return Readout(scores, att.data[:, 0].copy())


@dataclass(eq=False)
class ChannelOutput:
    scores: Tensor
    attention: np.ndarray
    latent_r: Tensor
    trace: list[NodeState] | None = None


def run_channel(batch: GraphBatch, features: Tensor, params: ChannelParams, T: int,
                trace: bool = False) -> ChannelOutput:
    state = init_states(batch, features, params)
    states = [state] if trace else None
    transform = _EdgeTransform(batch, params, params.variant) if T > 0 else None
    for _ in range(T):
        state = propagate_step(state, batch, params, params.variant, transform)
        if trace:
            states.append(state)
    out = readout(state, batch, params)
    return ChannelOutput(out.scores, out.attention, state.latent_r, states)


def fuse(x_vis: Tensor, x_txt: Tensor, beta: float) -> Tensor:
    return ad.add(ad.scale(x_vis, beta), ad.scale(x_txt, 1.0 - beta))


def consistency(r_vis: Tensor, r_txt: Tensor) -> Tensor:
    """Sum over items of squared distance between the two latent views."""
    if r_vis.shape != r_txt.shape:
        raise ConfigError(f"channel latent shapes differ: {r_vis.shape} vs {r_txt.shape}")
    return ad.reduce_sum(ad.square(ad.sub(r_vis, r_txt)))


# ---------------------------------------------------------------------------
# model


@dataclass(eq=False)
class BatchOutput:
    scores: Tensor                      # (B, 1) fused score
    channel_scores: dict[str, Tensor]
    attention: dict[str, np.ndarray]
    latent: dict[str, Tensor]
    con: Tensor | None                  # consistency penalty, multimodal only
    traces: dict[str, list[NodeState]] | None = None


@dataclass(eq=False)
class CompatibilityModel:
    config: ModelConfig
    graph: FashionGraph
    channels: dict[str, ChannelParams]

    @classmethod
    def init(cls, config: ModelConfig, graph: FashionGraph, feature_dims: Mapping[str, int],
             rng: np.random.Generator) -> "CompatibilityModel":
        channels = {}
        for name in config.channels:
            if name not in feature_dims:
                raise ConfigError(f"missing feature dimension for the {name} channel")
            channels[name] = ChannelParams.init(config.variant, graph.num_nodes, config.d,
                                                int(feature_dims[name]), rng, graph)
        return cls(config, graph, channels)

    def parameters(self) -> list[tuple[str, Tensor]]:
        return [(f"{ch}.{k}", t) for ch, p in self.channels.items() for k, t in p.tensors.items()]

    def num_parameters(self) -> int:
        return sum(p.num_parameters() for p in self.channels.values())

    def copy(self) -> "CompatibilityModel":
        return CompatibilityModel(self.config, self.graph, {k: p.copy() for k, p in self.channels.items()})

    def forward(self, batch: GraphBatch, features: Mapping[str, FeatureStore], trace: bool = False) -> BatchOutput:
        outs = {}
        for name, params in self.channels.items():
            if name not in features:
                raise ConfigError(f"no {name} feature store supplied")
            outs[name] = run_channel(batch, batch.features(features[name], name), params, self.config.T, trace)
        if self.config.modality == "multimodal":
            vis, txt = outs["visual"], outs["textual"]
            if vis.latent_r.shape[1] != txt.latent_r.shape[1]:
                raise ConfigError("visual and textual channels must share the latent size d")
            scores = fuse(vis.scores, txt.scores, self.config.beta)
            con = consistency(vis.latent_r, txt.latent_r)
        else:
            (only,) = outs.values()
            scores, con = only.scores, None
        return BatchOutput(
            scores,
            {k: o.scores for k, o in outs.items()},
            {k: o.attention for k, o in outs.items()},
            {k: o.latent_r for k, o in outs.items()},
            con,
            {k: o.trace for k, o in outs.items()} if trace else None,
        )

    def score(self, outfits: Sequence[Outfit], features: Mapping[str, FeatureStore],
              batch_size: int = 256) -> np.ndarray:
        """Compatibility scores without recording a tape."""
        out = np.empty(len(outfits))
        for start in range(0, len(outfits), batch_size):
            chunk = outfits[start:start + batch_size]
            batch = GraphBatch.build(chunk, self.graph)
            out[start:start + len(chunk)] = self.forward(batch, features).scores.data[:, 0]
        return out


def score_outfit(outfit: Outfit, model: CompatibilityModel, features: Mapping[str, FeatureStore]) -> dict:
    """Score one outfit; also returns per-item attention weights and latent vectors."""
    batch = GraphBatch.build([outfit], model.graph)
    out = model.forward(batch, features)
    return {
        "score": float(out.scores.data[0, 0]),
        "channel_scores": {k: float(v.data[0, 0]) for k, v in out.channel_scores.items()},
        "attention": {k: v.tolist() for k, v in out.attention.items()},
        "latent_r": {k: v.data.copy() for k, v in out.latent.items()},
    }


def score_multimodal(outfit: Outfit, model: CompatibilityModel, features: Mapping[str, FeatureStore]) -> dict:
    if model.config.modality != "multimodal":
        raise ConfigError("score_multimodal needs a multimodal model")
    batch = GraphBatch.build([outfit], model.graph)
    out = model.forward(batch, features)
    return {
        "score": float(out.scores.data[0, 0]),
        "visual": float(out.channel_scores["visual"].data[0, 0]),
        "textual": float(out.channel_scores["textual"].data[0, 0]),
        "consistency": float(out.con.data),
    }


def count_params(config: ModelConfig, num_nodes: int, num_edges: int, F: int) -> int:
    """Closed-form parameter count of one channel."""
    d = config.d
    shared = d + 3 * (2 * d * d + d) + 2 * (d + 1)  # b_p, GRU, attention
    if config.variant == "NGNN":
        return num_nodes * (d * F + 2 * d * d) + shared
    if config.variant == "GGNN":
        return num_nodes * d * F + d * d + shared
    return num_nodes * d * F + num_edges * d * d + shared
