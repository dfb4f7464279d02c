"""Independent reference computations used as test oracles.

Nothing here imports the autodiff engine or the batched model code: the
forward pass is re-derived with plain numpy loops over items, and gradients
come from central finite differences.
"""

from __future__ import annotations

import numpy as np


def central_diff(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar ``f()`` w.r.t. the array ``x`` (mutated in place, then restored)."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = f()
        flat[k] = orig - step
        down = f()
        flat[k] = orig
        gf[k] = (up - down) / (2 * step)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error, 0 when both are exactly zero."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def _lrelu(x):
    return x if x > 0 else 0.01 * x


def reference_channel(cats, feats, A, P, variant, T, edge_of=None):
    """Straight-line score of one outfit for one channel.

    ``cats`` are the graph indices of the items, ``feats`` their feature
    vectors, ``P`` a dict of plain arrays keyed like the model's tensors and
    ``edge_of[(src, dst)]`` the row of ``W_e`` for an edge.
    Returns (score, latent vectors, list of per-step states).
    """
    n = len(cats)
    latent = [P["W_h"][c] @ f for c, f in zip(cats, feats)]
    h = [np.tanh(r) for r in latent]
    states = [h]
    for _ in range(T):
        new = []
        for i in range(n):
            a = P["b_p"].copy()
            for j in range(n):
                if j == i:
                    continue
                w = A[cats[j], cats[i]]
                if w == 0:
                    continue
                if variant == "NGNN":
                    m = P["W_out"][cats[j]] @ (P["W_in"][cats[i]] @ h[j])
                elif variant == "GGNN":
                    m = P["W_p"] @ h[j]
                else:
                    m = P["W_e"][edge_of[(cats[j], cats[i])]] @ h[j]
                a = a + w * m
            z = _sig(P["W_z"] @ a + P["U_z"] @ h[i] + P["b_z"])
            r = _sig(P["W_r"] @ a + P["U_r"] @ h[i] + P["b_r"])
            cand = np.tanh(P["W_cand"] @ a + P["U_cand"] @ (r * h[i]) + P["b_cand"])
            new.append(cand * z + h[i] * (1 - z))
        h = new
        states.append(h)
    score = 0.0
    for hi in h:
        att = _sig(float(P["theta_w"][0] @ hi + P["theta_b"][0]))
        score += att * _lrelu(float(P["delta_w"][0] @ hi + P["delta_b"][0]))
    return score, latent, states


def reference_score(outfit, model, features):
    """Fused score and consistency penalty of one outfit, recomputed from scratch."""
    graph = model.graph
    cats = [graph.vocab.index(it.category) for it in outfit.items]
    edge_of = {e: k for k, e in enumerate(graph.edges())}
    scores, latents = {}, {}
    for ch, params in model.channels.items():
        P = {k: t.data for k, t in params.tensors.items()}
        feats = [features[ch].get(it.feature_key(ch)) for it in outfit.items]
        scores[ch], latents[ch], _ = reference_channel(cats, feats, graph.adjacency, P, params.variant,
                                                       model.config.T, edge_of)
    if model.config.modality == "multimodal":
        beta = model.config.beta
        con = sum(float(np.sum((v - t) ** 2)) for v, t in zip(latents["visual"], latents["textual"]))
        return beta * scores["visual"] + (1 - beta) * scores["textual"], con
    (only,) = scores.values()
    return only, 0.0
