"""Word embedding tables: text I/O, lookup and skip-gram training."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dialogic.corpus import Vocabulary, build_vocabulary, tokenize
from dialogic.errors import DimMismatch, DuplicateToken, EmptyCorpus, HeaderMismatch

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class EmbeddingTable:
    """Vocabulary plus a ``|V| x d`` matrix whose rows 0/1 are PAD/UNK."""

    vocabulary: Vocabulary
    matrix: np.ndarray
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.vocabulary):
            raise DimMismatch(
                f"matrix shape {self.matrix.shape} does not match vocabulary of {len(self.vocabulary)}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("embedding matrix contains non-finite values")
        if np.any(self.matrix[Vocabulary.PAD_INDEX] != 0):
            raise ValueError("PAD row must be all zeros")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]

    @classmethod
    def from_rows(cls, tokens, rows, history=None):
        """Build a table from token rows, deriving the reserved PAD/UNK rows."""
        rows = np.asarray(rows, dtype=np.float64)
        vocab = Vocabulary(tokens)
        d = rows.shape[1]
        matrix = np.zeros((len(vocab), d))
        matrix[2:] = rows
        if len(rows):
            matrix[Vocabulary.UNK_INDEX] = rows.mean(axis=0)
        return cls(vocab, matrix, list(history or []))

    def save(self, path) -> None:
        lines = [f"{len(self.vocabulary.tokens)} {self.dim}"]
        for i, tok in enumerate(self.vocabulary.tokens, start=2):
            lines.append(tok + " " + " ".join(f"{v:.12g}" for v in self.matrix[i]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings(source) -> EmbeddingTable:
    """Parse the ``"V d"`` header text format.

    ``source`` is a path or an iterable of lines. The UNK row becomes the mean
    of all loaded rows and PAD stays zero.
    """
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise HeaderMismatch("missing 'V d' header")
    try:
        n_words, dim = (int(x) for x in lines[0].split())
    except ValueError as exc:
        raise HeaderMismatch(f"bad header {lines[0]!r}") from exc
    if n_words < 1 or dim < 1:
        raise HeaderMismatch(f"header declares V={n_words}, d={dim}; both must be >= 1")
    body = lines[1:]
    if len(body) != n_words:
        raise HeaderMismatch(f"header declares {n_words} rows, body has {len(body)}")
    tokens, rows, seen = [], [], set()
    for lineno, line in enumerate(body, start=2):
        parts = line.split()
        tok, values = parts[0], parts[1:]
        if len(values) != dim:
            raise DimMismatch(f"line {lineno}: expected {dim} values, got {len(values)}")
        if tok in seen or tok in (Vocabulary.PAD, Vocabulary.UNK):
            raise DuplicateToken(f"line {lineno}: duplicate token {tok!r}")
        seen.add(tok)
        tokens.append(tok)
        rows.append([float(v) for v in values])
    return EmbeddingTable.from_rows(tokens, rows)


def embed_sentence(tokens, table: EmbeddingTable) -> np.ndarray:
    """Row lookup with UNK fallback; an empty sentence yields one PAD row."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    idx = table.vocabulary.encode(tokens) or [Vocabulary.PAD_INDEX]
    return table.matrix[idx]


def featurize_mean(tokens, table: EmbeddingTable) -> np.ndarray:
    """Mean of the embedded rows.

    Computed from token counts so the result is bit-identical under any
    reordering of ``tokens``.
    """
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    idx = table.vocabulary.encode(tokens) or [Vocabulary.PAD_INDEX]
    counts = np.bincount(idx, minlength=len(table))
    nz = np.flatnonzero(counts)
    return counts[nz] @ table.matrix[nz] / len(idx)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _scatter_add(target, idx, values):
    # sorted segment sums; much faster than np.add.at on repeated rows
    order = np.argsort(idx, kind="stable")
    idx = idx[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    target[idx[starts]] += np.add.reduceat(values[order], starts, axis=0)


def train_skipgram(
    corpus,
    dim: int = 64,
    window: int = 2,
    negatives: int = 5,
    epochs: int = 5,
    learning_rate: float = 0.025,
    seed: int = 0,
    min_count: int = 1,
    batch_size: int = 64,
) -> EmbeddingTable:
    """Skip-gram with negative sampling.

    For every (center, context) pair within ``window`` this maximizes
    ``log s(u_ctx . v_ctr) + sum_k log s(-u_neg_k . v_ctr)`` with negatives
    drawn from the unigram distribution to the 0.75 power. Updates are applied
    in small sequential batches of pairs with a linearly decaying learning rate.
    The returned table holds the center vectors; ``table.history`` records the
    mean loss (negated objective) of every epoch.
    """
    if dim < 2 or window < 1 or negatives < 1 or epochs < 1:
        raise ValueError("need dim >= 2, window >= 1, negatives >= 1, epochs >= 1")
    sentences = [tokenize(s) if isinstance(s, str) else list(s) for s in corpus]
    sentences = [s for s in sentences if s]
    if not sentences:
        raise EmptyCorpus("skip-gram needs at least one non-empty sentence")
    vocab = build_vocabulary(sentences, min_count)
    n_vocab = len(vocab)
    if n_vocab <= 2:
        raise EmptyCorpus("no token reaches min_count")

    centers, contexts = [], []
    for sent in sentences:
        ids = [i for i in vocab.encode(sent) if i != Vocabulary.UNK_INDEX]
        for pos, c in enumerate(ids):
            lo, hi = max(0, pos - window), min(len(ids), pos + window + 1)
            for j in range(lo, hi):
                if j != pos:
                    centers.append(c)
                    contexts.append(ids[j])
    centers = np.asarray(centers, dtype=np.int64)
    contexts = np.asarray(contexts, dtype=np.int64)
    if centers.size == 0:
        raise EmptyCorpus("corpus yields no (center, context) pairs")

    counts = np.bincount(centers, minlength=n_vocab).astype(np.float64)
    noise = counts**0.75
    noise /= noise.sum()
    noise_cdf = np.cumsum(noise)
    noise_cdf[-1] = 1.0

    rng = np.random.default_rng(seed)
    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_vocab, dim))
    w_out = np.zeros((n_vocab, dim))

    n_pairs = centers.size
    n_batches = -(-n_pairs // batch_size)
    total_steps = epochs * n_batches
    step = 0
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n_pairs)
        loss_sum = 0.0
        for b in range(n_batches):
            sel = order[b * batch_size : (b + 1) * batch_size]
            lr = learning_rate * max(1e-4, 1.0 - step / total_steps)
            step += 1
            c, o = centers[sel], contexts[sel]
            neg = np.searchsorted(noise_cdf, rng.random((sel.size, negatives)), side="right")
            v = w_in[c]
            u_pos = w_out[o]
            u_neg = w_out[neg]
            s_pos = np.einsum("bd,bd->b", u_pos, v)
            s_neg = np.einsum("bkd,bd->bk", u_neg, v)
            loss_sum -= _log_sigmoid(s_pos).sum() + _log_sigmoid(-s_neg).sum()
            g_pos = 1.0 - _sigmoid(s_pos)
            g_neg = -_sigmoid(s_neg)
            grad_v = g_pos[:, None] * u_pos + np.einsum("bk,bkd->bd", g_neg, u_neg)
            out_idx = np.concatenate([o, neg.reshape(-1)])
            out_grad = np.concatenate(
                [g_pos[:, None] * v, (g_neg[:, :, None] * v[:, None, :]).reshape(-1, dim)]
            )
            _scatter_add(w_out, out_idx, lr * out_grad)
            _scatter_add(w_in, c, lr * grad_v)
        history.append(loss_sum / n_pairs)
        logger.debug("skip-gram epoch %d loss %.5f", epoch + 1, history[-1])

    return EmbeddingTable.from_rows(vocab.tokens, w_in[2:], history)
