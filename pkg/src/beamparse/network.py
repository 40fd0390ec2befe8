"""Feed-forward scorer over discrete parser features.

The input layer gathers one embedding row per feature slot and concatenates
them (word block, then tag block, then label block, each in template order).
One or two fully connected rectified-linear layers follow, then a softmax
over the decisions that are legal in the current configuration; everything
illegal gets probability exactly zero.  Training minimizes the mean negative
log-likelihood of the oracle decisions plus an L2 penalty on the hidden
weight matrices only.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import features as F
from . import transitions as T

INIT_STD = 1e-2  # Gaussian with variance 1e-4 for weights and embeddings
HIDDEN_BIAS_INIT = 0.2  # keeps most rectifier units active at the start


@dataclass
class Dims:
    d_word: int = 64
    d_tag: int = 32
    d_label: int = 32
    m1: int = 200
    m2: int = 200  # None for a single hidden layer

    @property
    def embedded(self):
        return (
            F.N_WORD_FEATURES * self.d_word
            + F.N_TAG_FEATURES * self.d_tag
            + F.N_LABEL_FEATURES * self.d_label
        )

    def validate(self):
        for name in ("d_word", "d_tag", "d_label", "m1"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.m2 is not None and self.m2 < 1:
            raise ValueError("m2 must be positive or None")


class NetworkParams:
    """All learned matrices, plus the vocabulary sizes they were built for."""

    def __init__(self, dims, sizes, arrays):
        self.dims = dims
        self.sizes = sizes  # (n_words, n_tags, n_labels, n_decisions)
        for name, arr in arrays.items():
            setattr(self, name, arr)
        self._names = list(arrays)

    def field_names(self):
        return list(self._names)

    def fields(self):
        return [(name, getattr(self, name)) for name in self._names]

    @property
    def two_layers(self):
        return self.dims.m2 is not None

    def copy(self):
        return NetworkParams(self.dims, self.sizes, {n: a.copy() for n, a in self.fields()})

    def zeros_like(self):
        return {n: np.zeros_like(a) for n, a in self.fields()}

    def all_finite(self):
        return all(np.isfinite(a).all() for _, a in self.fields())

    def equal(self, other):
        return self._names == other._names and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in self._names
        )


def init_params(vocabs, dims, rng, embeddings=None):
    """Fresh parameters: Gaussian(0, 1e-4) weights, hidden biases at 0.2.

    ``embeddings`` maps word strings to vectors of length d_word; rows for
    covered vocabulary entries are copied in, everything else (including the
    special tokens) stays randomly initialized.
    """
    dims.validate()
    nw, nt, nl = len(vocabs.word), len(vocabs.tag), len(vocabs.label)
    ny = len(vocabs.decisions)
    e = dims.embedded
    m_last = dims.m2 if dims.m2 is not None else dims.m1
    arrays = {
        "e_word": rng.normal(0.0, INIT_STD, (nw, dims.d_word)),
        "e_tag": rng.normal(0.0, INIT_STD, (nt, dims.d_tag)),
        "e_label": rng.normal(0.0, INIT_STD, (nl, dims.d_label)),
        "w1": rng.normal(0.0, INIT_STD, (dims.m1, e)),
        "b1": np.full(dims.m1, HIDDEN_BIAS_INIT),
    }
    if dims.m2 is not None:
        arrays["w2"] = rng.normal(0.0, INIT_STD, (dims.m2, dims.m1))
        arrays["b2"] = np.full(dims.m2, HIDDEN_BIAS_INIT)
    arrays["beta"] = rng.normal(0.0, INIT_STD, (ny, m_last))
    arrays["b_y"] = np.zeros(ny)
    if embeddings:
        copied = 0
        for word, vec in embeddings.items():
            if len(vec) != dims.d_word:
                raise ValueError(
                    f"embedding for {word!r} has dimension {len(vec)}, expected {dims.d_word}"
                )
            if word in vocabs.word:
                arrays["e_word"][vocabs.word.id(word)] = vec
                copied += 1
    return NetworkParams(dims, (nw, nt, nl, ny), arrays)


@dataclass
class ForwardTrace:
    word_ids: np.ndarray
    tag_ids: np.ndarray
    label_ids: np.ndarray
    legal: np.ndarray  # (B, |Y|) bool
    h0: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray  # None for one-layer networks
    h2: np.ndarray
    log_probs: np.ndarray  # -inf at illegal decisions
    probs: np.ndarray  # exactly 0.0 at illegal decisions

    @property
    def h_last(self):
        return self.h1 if self.h2 is None else self.h2


def _as_batch(ids, width):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.shape[1] != width:
        raise ValueError(f"expected {width} feature ids per row, got {ids.shape[1]}")
    return ids


def stack_features(feature_list):
    """Stack per-configuration FeatureIds into batched id matrices."""
    w = np.stack([f.word_ids for f in feature_list])
    t = np.stack([f.tag_ids for f in feature_list])
    l = np.stack([f.label_ids for f in feature_list])
    return w, t, l


def forward(params, word_ids, tag_ids, label_ids, legal, precomp=None):
    """Run the network on a batch of feature rows with per-row legality masks."""
    w = _as_batch(word_ids, F.N_WORD_FEATURES)
    t = _as_batch(tag_ids, F.N_TAG_FEATURES)
    l = _as_batch(label_ids, F.N_LABEL_FEATURES)
    legal = np.asarray(legal, dtype=bool)
    if legal.ndim == 1:
        legal = legal[None, :]
    b = w.shape[0]
    nw, nt, nl, ny = params.sizes
    if w.max() >= nw or t.max() >= nt or l.max() >= nl:
        raise ValueError("feature id outside the vocabulary the network was built for")
    if legal.shape != (b, ny):
        raise ValueError(f"legal mask shape {legal.shape} does not match ({b}, {ny})")
    if not legal.any(axis=1).all():
        raise ValueError("every example needs at least one legal decision")

    if precomp is not None:
        h0 = None  # inference shortcut; the gradient path never uses precomp
        z1 = precomp.hidden_preactivation(w, t, l)
    else:
        h0 = np.concatenate(
            [
                params.e_word[w].reshape(b, -1),
                params.e_tag[t].reshape(b, -1),
                params.e_label[l].reshape(b, -1),
            ],
            axis=1,
        )
        z1 = h0 @ params.w1.T + params.b1
    h1 = np.maximum(z1, 0.0)
    if params.two_layers:
        z2 = h1 @ params.w2.T + params.b2
        h2 = np.maximum(z2, 0.0)
        h_last = h2
    else:
        z2 = h2 = None
        h_last = h1
    logits = h_last @ params.beta.T + params.b_y

    masked = np.where(legal, logits, -np.inf)
    peak = masked.max(axis=1, keepdims=True)
    expd = np.where(legal, np.exp(masked - peak), 0.0)
    norm = expd.sum(axis=1, keepdims=True)
    log_probs = np.where(legal, masked - peak - np.log(norm), -np.inf)
    probs = np.where(legal, expd / norm, 0.0)
    return ForwardTrace(w, t, l, legal, h0, z1, h1, z2, h2, log_probs, probs)


def forward_config(params, config, sentence, precomp=None):
    """Single-configuration forward pass; returns the trace with batch size 1."""
    feats = F.extract_features(config, sentence)
    mask = sentence.decisions.legal_mask(config)
    return forward(params, feats.word_ids, feats.tag_ids, feats.label_ids, mask, precomp)


def loss_and_gradient(params, word_ids, tag_ids, label_ids, legal, gold, lam):
    """Mean NLL of the gold decisions plus lam * sum of squared hidden weights.

    The gradient covers every parameter; the L2 term touches only w1 (and w2).
    """
    trace = forward(params, word_ids, tag_ids, label_ids, legal)
    b = trace.log_probs.shape[0]
    gold = np.asarray(gold, dtype=np.int64)
    if not trace.legal[np.arange(b), gold].all():
        raise ValueError("gold decision is illegal in its configuration")
    nll = -trace.log_probs[np.arange(b), gold]
    loss = float(nll.mean()) + lam * float((params.w1 ** 2).sum())
    if params.two_layers:
        loss += lam * float((params.w2 ** 2).sum())

    grads = params.zeros_like()
    dlogits = trace.probs.copy()
    dlogits[np.arange(b), gold] -= 1.0
    dlogits /= b

    h_last = trace.h_last
    grads["beta"][:] = dlogits.T @ h_last
    grads["b_y"][:] = dlogits.sum(axis=0)
    dh = dlogits @ params.beta
    if params.two_layers:
        dz2 = dh * (trace.z2 > 0.0)
        grads["w2"][:] = dz2.T @ trace.h1 + 2.0 * lam * params.w2
        grads["b2"][:] = dz2.sum(axis=0)
        dh = dz2 @ params.w2
    dz1 = dh * (trace.z1 > 0.0)
    grads["w1"][:] = dz1.T @ trace.h0 + 2.0 * lam * params.w1
    grads["b1"][:] = dz1.sum(axis=0)
    dh0 = dz1 @ params.w1

    dims = params.dims
    wb = F.N_WORD_FEATURES * dims.d_word
    tb = wb + F.N_TAG_FEATURES * dims.d_tag
    dw = dh0[:, :wb].reshape(b, F.N_WORD_FEATURES, dims.d_word)
    dt = dh0[:, wb:tb].reshape(b, F.N_TAG_FEATURES, dims.d_tag)
    dl = dh0[:, tb:].reshape(b, F.N_LABEL_FEATURES, dims.d_label)
    np.add.at(grads["e_word"], trace.word_ids.ravel(), dw.reshape(-1, dims.d_word))
    np.add.at(grads["e_tag"], trace.tag_ids.ravel(), dt.reshape(-1, dims.d_tag))
    np.add.at(grads["e_label"], trace.label_ids.ravel(), dl.reshape(-1, dims.d_label))
    return loss, grads


def greedy_parse(params, tree, vocabs, precomp=None):
    """Parse by always taking the most probable legal decision.

    Ties go to the lowest decision id.  Exactly 2n decisions are taken, so
    this terminates for any input sentence.
    """
    sentence = vocabs.index_sentence(tree)
    decisions = vocabs.decisions
    config = T.initial_configuration(len(tree))
    while not T.is_terminal(config):
        trace = forward_config(params, config, sentence, precomp)
        did = int(np.argmax(trace.probs[0]))
        config = T.apply(config, decisions.decision(did))
    return T.config_to_tree(config, tree)


class Precomputation:
    """Per-slot lookup tables for the first hidden layer's pre-activation.

    For every (slot, feature id) pair the contribution of that embedding row
    through its column block of w1 is cached, so the first layer becomes a
    sum of table rows plus the bias.  A pure speed trick: results match the
    naive matmul up to float addition order.
    """

    def __init__(self, params):
        dims = params.dims
        m1 = dims.m1

        def tables(emb, count, d, offset):
            out = np.empty((count, emb.shape[0], m1))
            for s in range(count):
                block = params.w1[:, offset + s * d : offset + (s + 1) * d]
                out[s] = emb @ block.T
            return out

        wb = F.N_WORD_FEATURES * dims.d_word
        tb = wb + F.N_TAG_FEATURES * dims.d_tag
        self.word_tables = tables(params.e_word, F.N_WORD_FEATURES, dims.d_word, 0)
        self.tag_tables = tables(params.e_tag, F.N_TAG_FEATURES, dims.d_tag, wb)
        self.label_tables = tables(params.e_label, F.N_LABEL_FEATURES, dims.d_label, tb)
        self.b1 = params.b1

    def hidden_preactivation(self, word_ids, tag_ids, label_ids):
        b = word_ids.shape[0]
        z = np.tile(self.b1, (b, 1))
        for s in range(F.N_WORD_FEATURES):
            z += self.word_tables[s, word_ids[:, s]]
        for s in range(F.N_TAG_FEATURES):
            z += self.tag_tables[s, tag_ids[:, s]]
        for s in range(F.N_LABEL_FEATURES):
            z += self.label_tables[s, label_ids[:, s]]
        return z
