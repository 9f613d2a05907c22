"""BiLSTM + softmax POS tagger written directly in numpy.

Input per token: word embedding (lowercased form) concatenated with the mean
of its prefix/suffix embeddings. Inverted dropout sits after that
concatenation and after the BiLSTM output. NULL-tagged tokens are masked out
of the cross-entropy, so they contribute neither loss nor gradient.

Batches are padded at the tail. The backward LSTM runs over each sentence
reversed within its own length, so padding always comes after real tokens
in both directions and never reaches them.
"""
from __future__ import annotations

import json
import struct
from collections import Counter
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .corpus_io import UPOS, TaggedSentence, TagSet, Vocabulary

FORMAT_VERSION = 1
_MAGIC = b"XLPOSTAG"
GATES = 4  # input, forget, output, candidate
BLOCKS = ("word_emb", "affix_emb", "fwd_Wx", "fwd_Wh", "fwd_b",
          "bwd_Wx", "bwd_Wh", "bwd_b", "out_W", "out_b")
SPARSE_BLOCKS = ("word_emb", "affix_emb")
_NO_DECAY = ("fwd_b", "bwd_b", "out_b")
_EMBEDDINGS = ("word_emb", "affix_emb")


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass
class TaggerConfig:
    word_embedding_size: int = 64
    affix_embedding_size: int = 64
    hidden_nodes: int = 128          # concatenated BiLSTM output, half per direction
    dropout_rate: float = 0.7
    dropout_layers: int = 2
    learning_rate: float = 1e-3
    decay_rate: float = 0.1
    lr_schedule: str = "inverse_time"  # or "step": lr * decay_rate ** (epoch // step_epochs)
    step_epochs: int = 10
    l2_coefficient: float = 1e-4
    epochs: int = 20
    optimizer: str = "adam"
    affix_max_len: int = 4
    batch_size: int = 1
    clip_norm: float = 5.0
    word_min_count: int = 2
    dtype: str = "float32"
    seed: int = 0

    def validate(self):
        for name in ("word_embedding_size", "affix_embedding_size", "hidden_nodes",
                     "epochs", "affix_max_len", "batch_size", "word_min_count", "step_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.hidden_nodes % 2:
            raise ValueError("hidden_nodes must be even (split across two directions)")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.dropout_layers not in (0, 1, 2):
            raise ValueError("dropout_layers must be 0, 1 or 2")
        if self.learning_rate < 0 or self.decay_rate < 0 or self.l2_coefficient < 0:
            raise ValueError("learning_rate, decay_rate and l2_coefficient must be >= 0")
        if self.lr_schedule not in ("inverse_time", "step"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is implemented")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        return self

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "inverse_time":
            return self.learning_rate / (1.0 + self.decay_rate * epoch)
        return self.learning_rate * self.decay_rate ** (epoch // self.step_epochs)


class FeatureVector(NamedTuple):
    word: int
    affixes: tuple[int, ...]


def affix_strings(form: str, max_len: int = 4) -> list[str]:
    """Prefixes as ``x^`` and suffixes as ``^x`` for lengths 1..min(max_len, len)."""
    n = min(max_len, len(form))
    return [form[:k] + "^" for k in range(1, n + 1)] + ["^" + form[-k:] for k in range(1, n + 1)]


def extract_features(form: str, vocab: Vocabulary, affix_vocab: Vocabulary,
                     max_len: int = 4) -> FeatureVector:
    return FeatureVector(vocab.lookup(form.lower()),
                         tuple(affix_vocab.lookup(a) for a in affix_strings(form, max_len)))


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class SparseRows(NamedTuple):
    rows: np.ndarray
    values: np.ndarray


class TaggerModel:
    """Parameters, vocabularies, optimizer state and the RNG for one tagger."""

    def __init__(self, config: TaggerConfig, vocab: Vocabulary, affix_vocab: Vocabulary,
                 tagset: TagSet = UPOS):
        self.config = config.validate()
        self.vocab = vocab
        self.affix_vocab = affix_vocab
        self.tagset = tagset
        self.dtype = np.dtype(config.dtype)
        self.rng = np.random.default_rng(config.seed)
        # dense blocks are views into one flat buffer per group so the
        # optimizer can update them with a handful of whole-array ops
        init = self._init_params()
        # fwd/bwd pairs sit next to each other so both directions form one (2, ...) view
        self.dense = [f"{d}_{w}" for w in ("Wx", "Wh", "b") for d in ("fwd", "bwd")]
        self.dense += [k for k in init if k not in _EMBEDDINGS and k not in self.dense]
        self.flat, self.params = self._pack(init)
        self.flat_m, self.m = self._pack({k: np.zeros_like(v) for k, v in init.items()})
        self.flat_v, self.v = self._pack({k: np.zeros_like(v) for k, v in init.items()})
        self.pairs = {}
        for w in ("Wx", "Wh", "b"):
            a = self.params[f"fwd_{w}"]
            start = (a.__array_interface__["data"][0]
                     - self.flat.__array_interface__["data"][0]) // a.itemsize
            self.pairs[w] = self.flat[start:start + 2 * a.size].reshape((2,) + a.shape)
        self.decay = np.concatenate([
            np.full(init[k].size, 0.0 if k in _NO_DECAY else config.l2_coefficient, self.dtype)
            for k in self.dense])
        self.scratch = np.empty((2, self.flat.size), dtype=self.dtype)
        self.step = 0

    def _pack(self, arrays: dict):
        flat = np.concatenate([arrays[k].ravel() for k in self.dense])
        views, start = {}, 0
        for k in self.dense:
            views[k] = flat[start:start + arrays[k].size].reshape(arrays[k].shape)
            start += arrays[k].size
        return flat, {k: a if k in _EMBEDDINGS else views[k] for k, a in arrays.items()}

    @property
    def hidden(self) -> int:
        return self.config.hidden_nodes // 2

    @property
    def input_size(self) -> int:
        return self.config.word_embedding_size + self.config.affix_embedding_size

    def _init_params(self):
        c, rng, H, D = self.config, self.rng, self.hidden, self.input_size
        K = len(self.tagset)

        def uniform(shape, bound):
            return rng.uniform(-bound, bound, size=shape)

        p = {
            "word_emb": uniform((len(self.vocab), c.word_embedding_size), 0.1),
            "affix_emb": uniform((len(self.affix_vocab), c.affix_embedding_size), 0.1),
        }
        for d in ("fwd", "bwd"):
            p[f"{d}_Wx"] = uniform((D, GATES * H), np.sqrt(6.0 / (D + GATES * H)))
            p[f"{d}_Wh"] = uniform((H, GATES * H), 1.0 / np.sqrt(H))
            b = np.zeros(GATES * H)
            b[H:2 * H] = 1.0  # forget gate starts open
            p[f"{d}_b"] = b
        p["out_W"] = uniform((2 * H, K), np.sqrt(6.0 / (2 * H + K)))
        p["out_b"] = np.zeros(K)
        p["word_emb"][Vocabulary.PAD] = 0.0
        p["affix_emb"][Vocabulary.PAD] = 0.0
        return {k: v.astype(self.dtype) for k, v in p.items()}

    def featurize(self, sentence: TaggedSentence | Sequence[str]) -> list[FeatureVector]:
        forms = sentence.forms if isinstance(sentence, TaggedSentence) else sentence
        return [extract_features(f, self.vocab, self.affix_vocab, self.config.affix_max_len)
                for f in forms]

    def check_finite(self):
        for name, p in self.params.items():
            if not np.all(np.isfinite(p)):
                raise TrainingError(f"parameter block {name} contains NaN/Inf")


def build_model(sentences: Sequence[TaggedSentence], config: TaggerConfig | None = None,
                tagset: TagSet = UPOS) -> TaggerModel:
    """Fresh model with word and affix vocabularies taken from ``sentences``."""
    config = (config or TaggerConfig()).validate()
    words, affixes = Counter(), Counter()
    for s in sentences:
        for form in s.forms:
            words[form.lower()] += 1
            affixes.update(affix_strings(form, config.affix_max_len))
    vocab = Vocabulary.from_counts(words, config.word_min_count)
    affix_vocab = Vocabulary.from_counts(affixes, 1)
    return TaggerModel(config, vocab, affix_vocab, tagset)


class _Batch(NamedTuple):
    words: np.ndarray      # (B, T)
    affixes: np.ndarray    # (B, T, A)
    affix_w: np.ndarray    # (B, T, A) averaging weights, 0 on padding
    lengths: np.ndarray    # (B,)
    valid: np.ndarray      # (B, T) real-token mask
    rev: np.ndarray        # (B, T) per-sentence reversal index
    bidx: np.ndarray       # (B, 1)


def _encode(model: TaggerModel, batch: Sequence[Sequence[FeatureVector]]) -> _Batch:
    B = len(batch)
    lengths = np.array([len(s) for s in batch])
    if B == 0 or lengths.min() < 1:
        raise ValueError("every sentence needs at least one token")
    T = int(lengths.max())
    A = 2 * model.config.affix_max_len
    words = np.zeros((B, T), dtype=np.int64)
    affixes = np.zeros((B, T, A), dtype=np.int64)
    affix_w = np.zeros((B, T, A), dtype=model.dtype)
    for b, sent in enumerate(batch):
        for t, fv in enumerate(sent):
            words[b, t] = fv.word
            n = len(fv.affixes)
            if n:
                affixes[b, t, :n] = fv.affixes
                affix_w[b, t, :n] = 1.0 / n
    pos = np.arange(T)[None, :]
    valid = pos < lengths[:, None]
    rev = np.where(valid, lengths[:, None] - 1 - pos, pos)
    return _Batch(words, affixes, affix_w, lengths, valid, rev, np.arange(B)[:, None])


def _lstm_forward(X, Wx, Wh, b):
    """Run stacked LSTMs: X (S, B, T, D), Wx (S, D, 4H), Wh (S, H, 4H), b (S, 4H)."""
    S, B, T, _ = X.shape
    H = Wh.shape[1]
    Xp = X @ Wx[:, None] + b[:, None, None]
    IFO = np.empty((S, B, T, 3 * H), dtype=X.dtype)
    G = np.empty((S, B, T, H), dtype=X.dtype)
    C = np.empty((S, B, T, H), dtype=X.dtype)
    TC = np.empty((S, B, T, H), dtype=X.dtype)
    Hs = np.empty((S, B, T, H), dtype=X.dtype)
    h = np.zeros((S, B, H), dtype=X.dtype)
    c = np.zeros((S, B, H), dtype=X.dtype)
    for t in range(T):
        z = Xp[:, :, t] + h @ Wh
        ifo = _sigmoid(z[..., :3 * H])
        g = np.tanh(z[..., 3 * H:])
        c = ifo[..., H:2 * H] * c + ifo[..., :H] * g
        tc = np.tanh(c)
        h = ifo[..., 2 * H:] * tc
        IFO[:, :, t], G[:, :, t], C[:, :, t], TC[:, :, t], Hs[:, :, t] = ifo, g, c, tc, h
    return Hs, (IFO, G, C, TC)


def _lstm_backward(dHs, X, Hs, Wx, Wh, cache):
    IFO, G, C, TC = cache
    S, B, T, H = dHs.shape
    dZ = np.empty((S, B, T, GATES * H), dtype=X.dtype)
    dh_next = np.zeros((S, B, H), dtype=X.dtype)
    dc_next = np.zeros((S, B, H), dtype=X.dtype)
    WhT = Wh.transpose(0, 2, 1)
    for t in range(T - 1, -1, -1):
        ifo = IFO[:, :, t]
        i, f, o = ifo[..., :H], ifo[..., H:2 * H], ifo[..., 2 * H:]
        g, tc = G[:, :, t], TC[:, :, t]
        dh = dHs[:, :, t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = dZ[:, :, t]
        dz[..., :H] = dc * g * i * (1.0 - i)
        dz[..., H:2 * H] = (dc * C[:, :, t - 1] * f * (1.0 - f)) if t > 0 else 0.0
        dz[..., 2 * H:3 * H] = dh * tc * o * (1.0 - o)
        dz[..., 3 * H:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ WhT
    D = X.shape[-1]
    dZ2 = dZ.reshape(S, -1, GATES * H)
    dWx = X.reshape(S, -1, D).transpose(0, 2, 1) @ dZ2
    H_prev = np.concatenate([np.zeros((S, B, 1, H), dtype=X.dtype), Hs[:, :, :-1]], axis=2)
    dWh = H_prev.reshape(S, -1, H).transpose(0, 2, 1) @ dZ2
    db = dZ2.sum(axis=1)
    dX = dZ @ Wx.transpose(0, 2, 1)[:, None]
    return dX, dWx, dWh, db


def _stacked(model: TaggerModel, name: str) -> np.ndarray:
    """Both directions' block as one (2, ...) array, a view into the flat parameters."""
    return model.pairs[name]


def _forward(model: TaggerModel, batch: _Batch, train_mode: bool):
    p, c = model.params, model.config
    word_part = p["word_emb"][batch.words]
    affix_part = np.einsum("btad,bta->btd", p["affix_emb"][batch.affixes], batch.affix_w)
    E = np.concatenate([word_part, affix_part], axis=-1)
    drop = train_mode and c.dropout_rate > 0
    mask1 = mask2 = None
    keep = 1.0 - c.dropout_rate
    if drop and c.dropout_layers >= 1:
        mask1 = ((model.rng.random(E.shape) < keep) / keep).astype(model.dtype)
        X = E * mask1
    else:
        X = E
    # direction 0 reads left to right, direction 1 reads each sentence reversed
    X2 = np.stack([X, X[batch.bidx, batch.rev]])
    H2, lstm_cache = _lstm_forward(X2, _stacked(model, "Wx"), _stacked(model, "Wh"),
                                   _stacked(model, "b"))
    Hcat = np.concatenate([H2[0], H2[1][batch.bidx, batch.rev]], axis=-1)
    if drop and c.dropout_layers >= 2:
        mask2 = ((model.rng.random(Hcat.shape) < keep) / keep).astype(model.dtype)
        Hd = Hcat * mask2
    else:
        Hd = Hcat
    scores = Hd @ p["out_W"] + p["out_b"]
    cache = dict(batch=batch, X2=X2, H2=H2, Hd=Hd, mask1=mask1, mask2=mask2, lstm=lstm_cache)
    return scores, cache


def _aggregate_rows(ids: np.ndarray, values: np.ndarray) -> SparseRows:
    rows, inv = np.unique(ids, return_inverse=True)
    out = np.zeros((len(rows), values.shape[-1]), dtype=values.dtype)
    np.add.at(out, inv.ravel(), values)
    return SparseRows(rows, out)


def _backward(model: TaggerModel, cache, dscores) -> dict:
    p, batch = model.params, cache["batch"]
    H = model.hidden
    Dw = model.config.word_embedding_size
    K = dscores.shape[-1]
    grads = {
        "out_W": cache["Hd"].reshape(-1, 2 * H).T @ dscores.reshape(-1, K),
        "out_b": dscores.reshape(-1, K).sum(axis=0),
    }
    dH = dscores @ p["out_W"].T
    if cache["mask2"] is not None:
        dH = dH * cache["mask2"]
    dH2 = np.stack([dH[..., :H], dH[..., H:][batch.bidx, batch.rev]])
    dX2, dWx, dWh, db = _lstm_backward(dH2, cache["X2"], cache["H2"], _stacked(model, "Wx"),
                                       _stacked(model, "Wh"), cache["lstm"])
    for k, d in enumerate(("fwd", "bwd")):
        grads[f"{d}_Wx"], grads[f"{d}_Wh"], grads[f"{d}_b"] = dWx[k], dWh[k], db[k]
    dX = dX2[0] + dX2[1][batch.bidx, batch.rev]
    if cache["mask1"] is not None:
        dX = dX * cache["mask1"]
    valid = batch.valid
    grads["word_emb"] = _aggregate_rows(batch.words[valid], dX[..., :Dw][valid])
    d_aff = dX[..., Dw:][valid]                       # (N, Da)
    w = batch.affix_w[valid]                           # (N, A)
    used = w > 0
    contrib = (w[..., None] * d_aff[:, None, :])[used]  # (M, Da)
    grads["affix_emb"] = _aggregate_rows(batch.affixes[valid][used], contrib)
    return grads


def _targets(batch: _Batch, tags_batch) -> np.ndarray:
    y = np.full(batch.words.shape, -1, dtype=np.int64)
    for b, tags in enumerate(tags_batch):
        if len(tags) != batch.lengths[b]:
            raise ValueError("tag sequence length does not match sentence length")
        y[b, :len(tags)] = [-1 if t is None else t for t in tags]
    return y


def _masked_loss(scores: np.ndarray, y: np.ndarray):
    valid = y >= 0
    n = int(valid.sum())
    dscores = np.zeros_like(scores)
    if n == 0:
        return 0.0, dscores
    s = scores[valid].astype(np.float64)
    s -= s.max(axis=1, keepdims=True)
    logz = np.log(np.exp(s).sum(axis=1))
    gold = y[valid]
    rows = np.arange(n)
    loss = float(np.mean(logz - s[rows, gold]))
    probs = np.exp(s - logz[:, None])
    probs[rows, gold] -= 1.0
    dscores[valid] = probs / n
    return loss, dscores


def masked_loss(scores: np.ndarray, tags: Sequence[int | None]):
    """Mean cross-entropy over non-NULL positions and its gradient w.r.t. ``scores``.

    ``scores`` is (length, n_tags); NULL (``None``) positions get zero loss and
    a zero gradient row. An all-NULL sentence yields loss 0.
    """
    scores = np.asarray(scores)
    if len(tags) != scores.shape[0]:
        raise ValueError("tags and scores differ in length")
    y = np.array([-1 if t is None else t for t in tags], dtype=np.int64)
    return _masked_loss(scores, y)


def forward(model: TaggerModel, sentence: Sequence[FeatureVector], train_mode: bool = False):
    """Tag scores (length x n_tags) for one sentence plus the cached activations."""
    scores, cache = _forward(model, _encode(model, [sentence]), train_mode)
    return scores[0], cache


def backward(model: TaggerModel, cache, dscores: np.ndarray) -> dict:
    """Gradients of all parameter blocks given d(loss)/d(scores) from :func:`forward`."""
    return _backward(model, cache, dscores[None] if dscores.ndim == 2 else dscores)


def loss_and_grads(model: TaggerModel, batch, tags_batch, train_mode: bool = True):
    enc = _encode(model, batch)
    scores, cache = _forward(model, enc, train_mode)
    loss, dscores = _masked_loss(scores, _targets(enc, tags_batch))
    return loss, _backward(model, cache, dscores)


def _clip(grads: dict, max_norm: float) -> float:
    sq = 0.0
    for g in grads.values():
        v = (g.values if isinstance(g, SparseRows) else g).ravel()
        sq += float(np.vdot(v, v))
    norm = np.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / norm
        for k, g in grads.items():
            if isinstance(g, SparseRows):
                grads[k] = SparseRows(g.rows, g.values * scale)
            else:
                grads[k] = g * scale
    return norm


def _adam_update(model: TaggerModel, grads: dict, lr: float,
                 b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
    """AdamW step; embedding rows not in the batch are left untouched."""
    model.step += 1
    bc1 = 1.0 - b1 ** model.step
    bc2 = 1.0 - b2 ** model.step
    wd = model.config.l2_coefficient
    for name in _EMBEDDINGS:
        g = grads[name]
        p, m, v = model.params[name], model.m[name], model.v[name]
        r = g.rows
        gv = g.values
        mr = m[r] = b1 * m[r] + (1 - b1) * gv
        vr = v[r] = b2 * v[r] + (1 - b2) * gv * gv
        p[r] -= lr * ((mr / bc1) / (np.sqrt(vr / bc2) + eps) + wd * p[r])

    # preallocated scratch: fresh buffers of this size cost more than the arithmetic
    g = np.concatenate([grads[k].ravel() for k in model.dense], out=model.scratch[0])
    tmp = model.scratch[1]
    p, m, v = model.flat, model.flat_m, model.flat_v
    m *= b1
    np.multiply(g, 1 - b1, out=tmp)
    m += tmp
    v *= b2
    g *= g
    g *= 1 - b2
    v += g
    step = np.sqrt(v, out=g)
    step *= 1.0 / np.sqrt(bc2)
    step += eps
    np.divide(m, step, out=step)
    step *= lr / bc1
    np.multiply(model.decay, lr, out=tmp)
    tmp *= p
    step += tmp
    p -= step


def _canonical_key(example):
    feats, tags = example
    return (tuple(f.word for f in feats), tuple(f.affixes for f in feats),
            tuple(-1 if t is None else t for t in tags))


def train(model: TaggerModel, corpus, config: TaggerConfig | None = None, callback=None):
    """Fit ``model`` on (feature sequence, tag sequence) examples.

    Examples are put into a canonical order before the seeded per-epoch
    shuffle, so the result does not depend on the order of ``corpus``.
    Returns (model, per-epoch mean batch loss).
    """
    config = (config or model.config).validate()
    examples = sorted(corpus, key=_canonical_key)
    if not examples:
        raise ValueError("cannot train on an empty corpus")
    history = []
    bs = config.batch_size
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = model.rng.permutation(len(examples))
        losses = []
        for k, start in enumerate(range(0, len(order), bs)):
            idx = order[start:start + bs]
            batch = [examples[i][0] for i in idx]
            tags = [examples[i][1] for i in idx]
            loss, grads = loss_and_grads(model, batch, tags, train_mode=True)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}, batch {k} "
                                    f"(examples {idx.tolist()})")
            _clip(grads, config.clip_norm)
            _adam_update(model, grads, lr)
            losses.append(loss)
        model.check_finite()
        history.append(float(np.mean(losses)))
        if callback is not None:
            callback(epoch, history[-1])
    return model, history


def make_examples(model: TaggerModel, sentences: Sequence[TaggedSentence]):
    return [(model.featurize(s), s.tags) for s in sentences]


def fit(sentences: Sequence[TaggedSentence], config: TaggerConfig | None = None,
        tagset: TagSet = UPOS, callback=None):
    """Build vocabularies and a model from ``sentences`` and train it."""
    model = build_model(sentences, config, tagset)
    return train(model, make_examples(model, sentences), callback=callback)


def predict(model: TaggerModel, sentence: Sequence[FeatureVector]) -> list[int]:
    """Argmax tag per token; ties go to the smaller tag index."""
    scores, _ = forward(model, sentence, train_mode=False)
    return np.argmax(scores, axis=1).tolist()


def predict_batch(model: TaggerModel, sentences: Sequence[Sequence[FeatureVector]],
                  batch_size: int = 64) -> list[list[int]]:
    out = []
    for start in range(0, len(sentences), batch_size):
        chunk = sentences[start:start + batch_size]
        enc = _encode(model, chunk)
        scores, _ = _forward(model, enc, train_mode=False)
        best = np.argmax(scores, axis=-1)
        out.extend(best[b, :n].tolist() for b, n in enumerate(enc.lengths))
    return out


def tag_sentences(model: TaggerModel, sentences: Sequence[TaggedSentence]) -> list[TaggedSentence]:
    preds = predict_batch(model, [model.featurize(s) for s in sentences])
    return [s.with_tags(tags) for s, tags in zip(sentences, preds)]


def gradient_check(model: TaggerModel, sentence: Sequence[FeatureVector], tags,
                   epsilon: float = 1e-5, per_block: int = 20, seed: int = 0,
                   return_blocks: bool = False):
    """Largest relative error between analytic and central-difference gradients.

    Samples ``per_block`` coordinates from every parameter block (embedding
    coordinates from rows the sentence uses). Relative error is
    |a - n| / max(|a| + |n|, 1e-8). Requires a float64 model; dropout is off.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    if model.dtype != np.float64:
        raise ValueError("gradient checks need a float64 model")
    rng = np.random.default_rng(seed)
    enc = _encode(model, [sentence])
    y = _targets(enc, [tags])

    def loss_fn():
        s, _ = _forward(model, enc, train_mode=False)
        return _masked_loss(s, y)[0]

    scores, cache = _forward(model, enc, train_mode=False)
    _, dscores = _masked_loss(scores, y)
    grads = _backward(model, cache, dscores)
    errors = {}
    for name in BLOCKS:
        p = model.params[name]
        g = grads[name]
        if isinstance(g, SparseRows):
            dense = np.zeros_like(p)
            dense[g.rows] = g.values
            rows = g.rows if len(g.rows) else np.arange(p.shape[0])
            coords = [(int(rng.choice(rows)), int(rng.integers(p.shape[1]))) for _ in range(per_block)]
        else:
            dense = g
            coords = [np.unravel_index(int(rng.integers(p.size)), p.shape) for _ in range(per_block)]
        worst = 0.0
        for idx in coords:
            old = p[idx]
            p[idx] = old + epsilon
            up = loss_fn()
            p[idx] = old - epsilon
            down = loss_fn()
            p[idx] = old
            num = (up - down) / (2 * epsilon)
            ana = float(dense[idx])
            worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), 1e-8))
        errors[name] = worst
    worst = max(errors.values())
    return (worst, errors) if return_blocks else worst


def save_model(model: TaggerModel, path) -> None:
    """Single-file container: magic, header length, JSON header, raw arrays."""
    arrays = []
    for prefix, group in (("param", model.params), ("adam_m", model.m), ("adam_v", model.v)):
        for name in BLOCKS:
            arrays.append((f"{prefix}/{name}", np.ascontiguousarray(group[name])))
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "tagset": list(model.tagset.tags),
        "vocab": [[f, model.vocab.counts[f]] for f in model.vocab.forms()],
        "affix_vocab": [[f, model.affix_vocab.counts[f]] for f in model.affix_vocab.forms()],
        "step": model.step,
        "arrays": [{"name": n, "dtype": a.dtype.str, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, a in arrays:
            fh.write(a.tobytes())


def _vocab_from_list(items) -> Vocabulary:
    v = Vocabulary()
    for i, (form, count) in enumerate(items, start=Vocabulary.RESERVED):
        v.index[form] = i
        v.counts[form] = count
    return v


def load_model(path) -> TaggerModel:
    data = Path(path).read_bytes()
    if not data.startswith(_MAGIC):
        raise ModelFormatError(f"{path}: not a tagger model file")
    (n,) = struct.unpack("<Q", data[len(_MAGIC):len(_MAGIC) + 8])
    offset = len(_MAGIC) + 8
    header = json.loads(data[offset:offset + n].decode("utf-8"))
    offset += n
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: model format version {header.get('format_version')!r}, "
                               f"expected {FORMAT_VERSION}")
    known = {f.name for f in fields(TaggerConfig)}
    config = TaggerConfig(**{k: v for k, v in header["config"].items() if k in known})
    model = TaggerModel(config, _vocab_from_list(header["vocab"]),
                        _vocab_from_list(header["affix_vocab"]), TagSet(tuple(header["tagset"])))
    for spec in header["arrays"]:
        dt = np.dtype(spec["dtype"])
        size = int(np.prod(spec["shape"])) * dt.itemsize
        arr = np.frombuffer(data[offset:offset + size], dtype=dt).reshape(spec["shape"]).copy()
        offset += size
        prefix, name = spec["name"].split("/")
        target = {"param": model.params, "adam_m": model.m, "adam_v": model.v}[prefix]
        if target[name].shape != arr.shape:
            raise ModelFormatError(f"{path}: block {name} has shape {arr.shape}, "
                                   f"config implies {target[name].shape}")
        target[name][...] = arr
    if offset != len(data):
        raise ModelFormatError(f"{path}: trailing bytes after parameter blocks")
    model.step = header["step"]
    return model
