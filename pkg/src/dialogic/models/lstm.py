"""LSTM sentence classifier with a two-layer feed-forward head.

Gates are stacked column-wise in the order input, forget, output, candidate,
so ``W`` is ``d x 4h``, ``U`` is ``h x 4h`` and ``b`` has length ``4h``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from dialogic.corpus import LabeledSentence, Vocabulary, tokenize
from dialogic.embeddings import EmbeddingTable
from dialogic.errors import DegenerateLabels, ShapeMismatch
from dialogic.evaluation import auc_value

logger = logging.getLogger(__name__)

GATES = ("input", "forget", "output", "candidate")
PARAM_NAMES = ("W", "U", "b", "W1", "b1", "W2", "b2")


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    """LSTM cell weights plus the feed-forward head, all in one bundle."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    @property
    def ff_size(self) -> int:
        return self.W1.shape[1]

    def __post_init__(self):
        d, h4 = self.W.shape
        h = h4 // 4
        expected = {
            "U": (h, 4 * h), "b": (4 * h,), "W1": (h, self.W1.shape[1]),
            "b1": (self.W1.shape[1],), "W2": (self.W1.shape[1], 1), "b2": (1,),
        }
        if h4 != 4 * h or h == 0:
            raise ShapeMismatch(f"W must be d x 4h, got {self.W.shape}")
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("parameters must be finite")

    def arrays(self):
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self) -> "LstmParams":
        return LstmParams(*(a.copy() for a in self.arrays()))

    def astype(self, dtype) -> "LstmParams":
        return LstmParams(*(a.astype(dtype) for a in self.arrays()))

    def gate(self, name: str):
        """Per-gate view ``(W_g, U_g, b_g)``."""
        k = GATES.index(name)
        h = self.hidden_size
        sl = slice(k * h, (k + 1) * h)
        return self.W[:, sl], self.U[:, sl], self.b[sl]

    @classmethod
    def zeros(cls, d, h, h_ff, dtype=np.float64):
        return cls(
            np.zeros((d, 4 * h), dtype), np.zeros((h, 4 * h), dtype), np.zeros(4 * h, dtype),
            np.zeros((h, h_ff), dtype), np.zeros(h_ff, dtype), np.zeros((h_ff, 1), dtype),
            np.zeros(1, dtype),
        )

    @classmethod
    def initialize(cls, d, h, h_ff, rng, dtype=np.float64):
        """Uniform in [-1/sqrt(h), 1/sqrt(h)] with the forget-gate bias at 1."""
        bound = 1.0 / np.sqrt(h)
        p = cls.zeros(d, h, h_ff, dtype)
        for a in p.arrays():
            a[...] = rng.uniform(-bound, bound, size=a.shape)
        p.b[h : 2 * h] = 1.0
        return p


@dataclass
class LstmCache:
    xs: np.ndarray
    mask: np.ndarray
    hs: list
    cs: list
    gates: list
    tanh_cs: list
    z1: np.ndarray = None
    a1: np.ndarray = None
    logits: np.ndarray = None


def _as_batch(vectors):
    x = np.asarray(vectors)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (T, d) or (B, T, d) input, got shape {x.shape}")
    return x


def lstm_forward(vectors, params: LstmParams, lengths=None):
    """Run the recurrence from zero state and return ``(h_T, cache)``.

    ``vectors`` is ``(T, d)`` for one sentence or ``(B, T, d)`` for a padded
    batch with ``lengths``; padded steps carry the previous state forward, so
    every row of ``h_T`` is the state after that sentence's last real token.
    """
    x = _as_batch(vectors)
    single = np.asarray(vectors).ndim == 2
    B, T, d = x.shape
    if T < 1:
        raise ShapeMismatch("sequence length must be >= 1")
    if d != params.input_size:
        raise ShapeMismatch(f"input dim {d} != model input dim {params.input_size}")
    if lengths is None:
        mask = np.ones((B, T), dtype=x.dtype)
    else:
        lengths = np.asarray(lengths)
        mask = (np.arange(T)[None, :] < lengths[:, None]).astype(x.dtype)
    h = params.hidden_size
    h_prev = np.zeros((B, h), dtype=np.result_type(x, params.W))
    c_prev = np.zeros_like(h_prev)
    cache = LstmCache(x, mask, [h_prev], [c_prev], [], [])
    for t in range(T):
        a = x[:, t] @ params.W + h_prev @ params.U + params.b
        i = sigmoid(a[:, :h])
        f = sigmoid(a[:, h : 2 * h])
        o = sigmoid(a[:, 2 * h : 3 * h])
        g = np.tanh(a[:, 3 * h :])
        c_new = f * c_prev + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[:, t : t + 1]
        c_prev = m * c_new + (1 - m) * c_prev
        h_prev = m * h_new + (1 - m) * h_prev
        cache.gates.append((i, f, o, g))
        cache.tanh_cs.append(tc)
        cache.hs.append(h_prev)
        cache.cs.append(c_prev)
    return (h_prev[0] if single else h_prev), cache


def head_forward(h_last, params: LstmParams, cache: LstmCache | None = None):
    """Two-layer feed-forward head; returns the pre-sigmoid logit."""
    z1 = h_last @ params.W1 + params.b1
    a1 = np.maximum(z1, 0.0)
    logit = (a1 @ params.W2 + params.b2)[..., 0]
    if cache is not None:
        cache.z1, cache.a1, cache.logits = z1, a1, logit
    return logit


def forward_logits(vectors, params: LstmParams, lengths=None):
    h_last, cache = lstm_forward(vectors, params, lengths)
    return head_forward(np.atleast_2d(h_last), params, cache), cache


def bce_from_logits(logits, y):
    """Per-example binary cross-entropy, stable for large ``|logit|``."""
    return np.logaddexp(0.0, logits) - y * logits


def backward(cache: LstmCache, params: LstmParams, dlogits) -> LstmParams:
    """Backpropagation through time given ``dL/dlogit`` for every row."""
    grads = LstmParams(*(np.zeros_like(a) for a in params.arrays()))
    dlogits = np.asarray(dlogits).reshape(-1, 1)
    grads.W2[...] = cache.a1.T @ dlogits
    grads.b2[...] = dlogits.sum(axis=0)
    dz1 = (dlogits @ params.W2.T) * (cache.z1 > 0)
    grads.W1[...] = cache.hs[-1].T @ dz1
    grads.b1[...] = dz1.sum(axis=0)

    dh = dz1 @ params.W1.T
    dc = np.zeros_like(dh)
    T = cache.xs.shape[1]
    for t in reversed(range(T)):
        m = cache.mask[:, t : t + 1]
        i, f, o, g = cache.gates[t]
        tc = cache.tanh_cs[t]
        c_prev, h_prev = cache.cs[t], cache.hs[t]
        dh_new = m * dh
        dc_new = m * dc + dh_new * o * (1.0 - tc * tc)
        da = np.concatenate(
            [
                dc_new * g * i * (1.0 - i),
                dc_new * c_prev * f * (1.0 - f),
                dh_new * tc * o * (1.0 - o),
                dc_new * i * (1.0 - g * g),
            ],
            axis=1,
        )
        grads.W += cache.xs[:, t].T @ da
        grads.U += h_prev.T @ da
        grads.b += da.sum(axis=0)
        dh = da @ params.U.T + (1 - m) * dh
        dc = dc_new * f + (1 - m) * dc
    return grads


def loss_and_grads(vectors, labels, params: LstmParams, lengths=None):
    """Mean BCE over the batch and its exact gradient."""
    logits, cache = forward_logits(vectors, params, lengths)
    y = np.asarray(labels, dtype=logits.dtype).reshape(-1)
    n = y.size
    loss = float(np.mean(bce_from_logits(logits, y)))
    grads = backward(cache, params, (sigmoid(logits) - y) / n)
    return loss, grads


# ---------------------------------------------------------------------------
# gradient checking


def gradient_check(d=3, h=4, length=5, seed=0, epsilon=1e-5, h_ff=None,
                   params: LstmParams | None = None, vectors=None, label=None,
                   dtype=np.longdouble) -> float:
    """Max relative error between BPTT and central finite differences.

    Runs on one example in extended precision. The error for each scalar
    parameter is ``|a - n| / max(1e-12, |a| + |n|)``.
    """
    rng = np.random.default_rng(seed)
    h_ff = h if h_ff is None else h_ff
    if params is None:
        params = LstmParams.initialize(d, h, h_ff, rng)
        # widen weights a little so gates leave their linear regime
        for a in params.arrays():
            a *= 2.0
    params = params.astype(dtype)
    if vectors is None:
        vectors = rng.normal(size=(length, params.input_size))
    vectors = np.asarray(vectors, dtype=dtype)
    if label is None:
        label = int(rng.integers(2))

    def loss_at(p):
        logits, _ = forward_logits(vectors, p)
        return bce_from_logits(logits, np.asarray([label], dtype=dtype))[0]

    _, grads = loss_and_grads(vectors, [label], params)
    worst = 0.0
    for name in PARAM_NAMES:
        theta = getattr(params, name)
        analytic = getattr(grads, name)
        flat = theta.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            plus = loss_at(params)
            flat[k] = orig - epsilon
            minus = loss_at(params)
            flat[k] = orig
            numeric = (plus - minus) / (2 * epsilon)
            a = analytic.reshape(-1)[k]
            err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            worst = max(worst, float(err))
    return worst


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    hidden_size: int = 64
    ff_size: int = 32
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 30
    clip_norm: float = 5.0
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.hidden_size, self.ff_size, self.batch_size, self.max_epochs) < 1:
            raise ValueError("sizes and max_epochs must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")


class Adam:
    def __init__(self, params: LstmParams, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]
        self.t = 0

    def step(self, params: LstmParams, grads: LstmParams):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params.arrays(), grads.arrays(), self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_global_norm(grads: LstmParams, max_norm: float) -> float:
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads.arrays())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.arrays():
            g *= scale
    return norm


def encode_batch(token_lists, table: EmbeddingTable):
    """Pad embedded sentences to ``(B, T_max, d)`` plus their lengths."""
    ids = [table.vocabulary.encode(t) or [Vocabulary.PAD_INDEX] for t in token_lists]
    lengths = np.array([len(s) for s in ids])
    padded = np.zeros((len(ids), lengths.max()), dtype=np.int64)
    for k, s in enumerate(ids):
        padded[k, : len(s)] = s
    return table.matrix[padded], lengths


def _texts(items):
    out = []
    for s in items:
        out.append(s.text if isinstance(s, LabeledSentence) else s)
    return out


def _check_labels(y, what):
    y = np.asarray(y)
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateLabels(f"{what} set needs at least one positive and one negative")
    return y


def predict_logits(token_lists, table, params, batch_size=256):
    out = []
    for start in range(0, len(token_lists), batch_size):
        x, lengths = encode_batch(token_lists[start : start + batch_size], table)
        logits, _ = forward_logits(x, params, lengths)
        out.append(logits)
    return np.concatenate(out) if out else np.zeros(0)


def train_classifier(train, validation, table: EmbeddingTable, config: TrainConfig = TrainConfig(),
                     instruction=None):
    """Fit an :class:`LstmClassifier` with Adam and validation early stopping.

    Returns ``(model, history)``; ``history`` holds one dict per epoch.
    """
    model = LstmClassifier(
        table=table, instruction=instruction, hidden_size=config.hidden_size,
        ff_size=config.ff_size, learning_rate=config.learning_rate,
        batch_size=config.batch_size, max_epochs=config.max_epochs,
        clip_norm=config.clip_norm, patience=config.patience, seed=config.seed,
    )
    model.fit(
        _texts(train), [s.label for s in train],
        eval_set=(_texts(validation), [s.label for s in validation]),
    )
    return model, model.history_


class LstmClassifier(ClassifierMixin, BaseEstimator):
    """Binary sentence classifier over frozen word embeddings.

    Parameters mirror :class:`TrainConfig`. ``fit`` takes raw sentences and
    0/1 labels; pass ``eval_set=(texts, labels)`` for early stopping, otherwise
    a tenth of the training data is held out.
    """

    def __init__(self, table=None, instruction=None, hidden_size=64, ff_size=32,
                 learning_rate=1e-3, batch_size=32, max_epochs=30, clip_norm=5.0,
                 patience=5, seed=0):
        self.table = table
        self.instruction = instruction
        self.hidden_size = hidden_size
        self.ff_size = ff_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.clip_norm = clip_norm
        self.patience = patience
        self.seed = seed

    def _tokens(self, X):
        return [x if isinstance(x, list) else tokenize(x) for x in _texts(X)]

    def fit(self, X, y, eval_set=None):
        if self.table is None:
            raise ValueError("LstmClassifier needs an embedding table")
        config = TrainConfig(self.hidden_size, self.ff_size, self.learning_rate, self.batch_size,
                             self.max_epochs, self.clip_norm, self.patience, self.seed)
        tokens = self._tokens(X)
        y = _check_labels(y, "training").astype(np.float64)
        if len(tokens) != y.size:
            raise ValueError("X and y differ in length")
        rng = np.random.default_rng(config.seed)
        if eval_set is None:
            order = rng.permutation(len(tokens))
            n_val = max(2, len(tokens) // 10)
            val_idx, tr_idx = order[:n_val], order[n_val:]
            val_tokens, val_y = [tokens[i] for i in val_idx], y[val_idx]
            tokens, y = [tokens[i] for i in tr_idx], y[tr_idx]
        else:
            val_tokens, val_y = self._tokens(eval_set[0]), np.asarray(eval_set[1], dtype=np.float64)
        _check_labels(val_y, "validation")

        params = LstmParams.initialize(self.table.dim, config.hidden_size, config.ff_size, rng)
        opt = Adam(params, config.learning_rate)
        best_auc, best_params, best_epoch, stale = -np.inf, params.copy(), 0, 0
        history = []
        n = len(tokens)
        for epoch in range(1, config.max_epochs + 1):
            order = rng.permutation(n)
            loss_sum = 0.0
            for start in range(0, n, config.batch_size):
                sel = order[start : start + config.batch_size]
                x, lengths = encode_batch([tokens[i] for i in sel], self.table)
                loss, grads = loss_and_grads(x, y[sel], params, lengths)
                clip_global_norm(grads, config.clip_norm)
                opt.step(params, grads)
                loss_sum += loss * sel.size
            val_logits = predict_logits(val_tokens, self.table, params)
            val_auc = auc_value(val_logits, val_y)
            val_loss = float(np.mean(bce_from_logits(val_logits, val_y)))
            history.append({"epoch": epoch, "train_loss": loss_sum / n,
                            "val_loss": val_loss, "val_auc": val_auc})
            logger.debug("epoch %d loss %.4f val_auc %.4f", epoch, loss_sum / n, val_auc)
            if val_auc > best_auc:
                best_auc, best_params, best_epoch, stale = val_auc, params.copy(), epoch, 0
            else:
                stale += 1
                if stale > config.patience:
                    break

        self.params_ = best_params
        self.history_ = history
        self.best_epoch_ = best_epoch
        self.best_val_auc_ = float(best_auc)
        self.epochs_run_ = len(history)
        self.classes_ = np.array([0, 1])
        return self

    @classmethod
    def from_params(cls, params: LstmParams, table, instruction=None, **metadata):
        model = cls(table=table, instruction=instruction, hidden_size=params.hidden_size,
                    ff_size=params.ff_size)
        model.params_ = params
        model.classes_ = np.array([0, 1])
        model.history_ = metadata.get("history", [])
        model.best_epoch_ = metadata.get("best_epoch", 0)
        model.best_val_auc_ = metadata.get("best_val_auc", float("nan"))
        model.epochs_run_ = metadata.get("epochs_run", 0)
        if "seed" in metadata:
            model.seed = metadata["seed"]
        return model

    def _check_dims(self):
        check_is_fitted(self, "params_")
        if self.table.dim != self.params_.input_size:
            raise ShapeMismatch(
                f"embedding dim {self.table.dim} != model input dim {self.params_.input_size}"
            )

    def decision_function(self, X):
        self._check_dims()
        return predict_logits(self._tokens(X), self.table, self.params_)

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)


def predict(sentence, table: EmbeddingTable, model: LstmClassifier) -> float:
    """Probability that one sentence (raw text or labeled) is an instance."""
    return float(model.predict_proba([sentence])[0, 1])
