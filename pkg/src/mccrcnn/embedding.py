"""Token vocabulary, windowed co-occurrence counting, and GloVe training.

The trainer minimizes the weighted least-squares objective

    J = sum over nonzero X_ij of f(X_ij) * (w_i . wt_j + b_i + bt_j - ln X_ij)^2
    f(x) = (x / x_max)^alpha  for x < x_max, else 1

with per-parameter AdaGrad updates (accumulators start at 1.0, so the
first step uses the raw learning rate) over seeded shuffled passes of the
nonzero co-occurrence entries.  Everything is float64 and fully
deterministic under a seed.  The final embedding of a token is the sum of
its center and context vectors.

Co-occurrence counting uses a symmetric window: tokens at positions p and
q of the same sequence with 0 < |p - q| <= window contribute 1/|p - q| to
both X[i][j] and X[j][i].  Both directions are accumulated back to back
per position pair, so the matrix is symmetric bit for bit, not just up to
rounding.  Zero entries are never stored.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import PipelineError

log = logging.getLogger(__name__)


class EmptyVocabulary(PipelineError):
    """No token survived the frequency threshold."""


class DivergedLoss(PipelineError):
    """The training objective became non-finite."""


class ZeroVector(PipelineError):
    """Cosine similarity is undefined for an all-zero embedding."""


#: id 0 is reserved for padding and never assigned to a token
PAD_ID = 0


@dataclass(frozen=True)
class Vocabulary:
    """Token ids assigned from 1 by descending frequency, ties lexicographic."""

    token_to_id: dict[str, int]
    counts: dict[str, int]
    min_count: int

    def __len__(self) -> int:
        return len(self.token_to_id)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def ordered_tokens(self) -> tuple[str, ...]:
        """Tokens sorted by id (row order of the embedding table)."""
        return tuple(sorted(self.token_to_id, key=self.token_to_id.get))


@dataclass(frozen=True)
class CooccurrenceMatrix:
    """Sparse symmetric co-occurrence counts keyed by (id, id) pairs."""

    entries: dict[tuple[int, int], float]
    window: int
    vocab_size: int


@dataclass
class EmbeddingTable:
    """Trained GloVe parameters; row r holds the token with id r + 1."""

    tokens: tuple[str, ...]
    w: np.ndarray        # center vectors, (|V|, k)
    w_ctx: np.ndarray    # context vectors, (|V|, k)
    b: np.ndarray        # center biases, (|V|,)
    b_ctx: np.ndarray    # context biases, (|V|,)
    _row: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._row = {tok: r for r, tok in enumerate(self.tokens)}

    @property
    def k(self) -> int:
        return self.w.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self._row

    def vector(self, token: str) -> np.ndarray:
        """Final embedding: center plus context vector."""
        r = self._row[token]
        return self.w[r] + self.w_ctx[r]


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Count tokens across all sequences and assign ids.

    ``corpus`` is an iterable of TokenSequence (or anything with a
    ``tokens`` attribute).  Raises EmptyVocabulary when nothing survives
    min_count.
    """
    counts: Counter[str] = Counter()
    for seq in corpus:
        counts.update(seq.tokens)
    kept = {tok: c for tok, c in counts.items() if c >= min_count}
    if not kept:
        raise EmptyVocabulary(f"no token reached min_count={min_count}")
    ordered = sorted(kept, key=lambda tok: (-kept[tok], tok))
    token_to_id = {tok: i + 1 for i, tok in enumerate(ordered)}
    return Vocabulary(token_to_id=token_to_id, counts=kept, min_count=min_count)


def count_cooccurrence(corpus, vocab: Vocabulary, window: int = 8) -> CooccurrenceMatrix:
    """Windowed co-occurrence counts with 1/distance weighting.

    Out-of-vocabulary tokens occupy positions (distances are measured in
    the original sequence) but contribute no entries.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    entries: dict[tuple[int, int], float] = {}
    get_id = vocab.token_to_id.get
    for seq in corpus:
        ids = [get_id(tok, PAD_ID) for tok in seq.tokens]
        n = len(ids)
        for p in range(n):
            center = ids[p]
            if center == PAD_ID:
                continue
            for q in range(p + 1, min(n, p + window + 1)):
                other = ids[q]
                if other == PAD_ID:
                    continue
                inc = 1.0 / (q - p)
                # symmetric pair updated back to back: bitwise symmetry
                key = (center, other)
                entries[key] = entries.get(key, 0.0) + inc
                key = (other, center)
                entries[key] = entries.get(key, 0.0) + inc
    return CooccurrenceMatrix(entries=entries, window=window, vocab_size=len(vocab))


def _weight(x: np.ndarray, x_max: float, alpha: float) -> np.ndarray:
    return np.where(x < x_max, (x / x_max) ** alpha, 1.0)


def _entry_arrays(cooc: CooccurrenceMatrix):
    items = sorted(cooc.entries.items())
    ii = np.array([i - 1 for (i, _j), _v in items], dtype=np.intp)
    jj = np.array([j - 1 for (_i, j), _v in items], dtype=np.intp)
    xs = np.array([v for _k, v in items], dtype=np.float64)
    return ii, jj, xs


def glove_loss(cooc: CooccurrenceMatrix, table: EmbeddingTable,
               x_max: float = 100.0, alpha: float = 0.75) -> float:
    """Exact objective J for the given parameters."""
    ii, jj, xs = _entry_arrays(cooc)
    diff = (
        np.einsum("nk,nk->n", table.w[ii], table.w_ctx[jj])
        + table.b[ii] + table.b_ctx[jj] - np.log(xs)
    )
    return float(np.sum(_weight(xs, x_max, alpha) * diff * diff))


def glove_gradients(cooc: CooccurrenceMatrix, table: EmbeddingTable,
                    x_max: float = 100.0, alpha: float = 0.75):
    """Analytic gradient of J with respect to all four parameter tensors.

    Returns a dict with keys "w", "w_ctx", "b", "b_ctx" shaped like the
    corresponding table arrays.
    """
    ii, jj, xs = _entry_arrays(cooc)
    diff = (
        np.einsum("nk,nk->n", table.w[ii], table.w_ctx[jj])
        + table.b[ii] + table.b_ctx[jj] - np.log(xs)
    )
    coef = 2.0 * _weight(xs, x_max, alpha) * diff
    dw = np.zeros_like(table.w)
    dw_ctx = np.zeros_like(table.w_ctx)
    db = np.zeros_like(table.b)
    db_ctx = np.zeros_like(table.b_ctx)
    np.add.at(dw, ii, coef[:, None] * table.w_ctx[jj])
    np.add.at(dw_ctx, jj, coef[:, None] * table.w[ii])
    np.add.at(db, ii, coef)
    np.add.at(db_ctx, jj, coef)
    return {"w": dw, "w_ctx": dw_ctx, "b": db, "b_ctx": db_ctx}


def train_glove(cooc: CooccurrenceMatrix, vocab: Vocabulary, k: int,
                epochs: int = 50, learning_rate: float = 0.05,
                x_max: float = 100.0, alpha: float = 0.75,
                seed: int = 0) -> tuple[EmbeddingTable, list[float]]:
    """Train embeddings by per-entry AdaGrad on shuffled nonzero entries.

    Returns the table and the loss history: element 0 is J at
    initialization, element e is J after epoch e.  Raises DivergedLoss if
    J ever becomes non-finite.
    """
    if not cooc.entries:
        raise ValueError("co-occurrence matrix has no entries")
    if cooc.vocab_size != len(vocab):
        raise ValueError("vocabulary size does not match co-occurrence matrix")
    n = cooc.vocab_size
    rng = np.random.default_rng(seed)
    span = 0.5 / k
    w = rng.uniform(-span, span, size=(n, k))
    w_ctx = rng.uniform(-span, span, size=(n, k))
    b = rng.uniform(-span, span, size=n)
    b_ctx = rng.uniform(-span, span, size=n)
    acc_w = np.ones_like(w)
    acc_wc = np.ones_like(w_ctx)
    acc_b = np.ones_like(b)
    acc_bc = np.ones_like(b_ctx)

    ii, jj, xs = _entry_arrays(cooc)
    logx = np.log(xs)
    fx = _weight(xs, x_max, alpha)
    tokens = vocab.ordered_tokens()

    def current_loss() -> float:
        diff = np.einsum("nk,nk->n", w[ii], w_ctx[jj]) + b[ii] + b_ctx[jj] - logx
        return float(np.sum(fx * diff * diff))

    losses = [current_loss()]
    for epoch in range(epochs):
        for t in rng.permutation(len(xs)):
            i, j = ii[t], jj[t]
            wi, wj = w[i], w_ctx[j]
            diff = wi @ wj + b[i] + b_ctx[j] - logx[t]
            coef = 2.0 * fx[t] * diff
            gw = coef * wj
            gwc = coef * wi
            w[i] = wi - learning_rate * gw / np.sqrt(acc_w[i])
            w_ctx[j] = wj - learning_rate * gwc / np.sqrt(acc_wc[j])
            b[i] -= learning_rate * coef / np.sqrt(acc_b[i])
            b_ctx[j] -= learning_rate * coef / np.sqrt(acc_bc[j])
            acc_w[i] += gw * gw
            acc_wc[j] += gwc * gwc
            acc_b[i] += coef * coef
            acc_bc[j] += coef * coef
        j_epoch = current_loss()
        if not np.isfinite(j_epoch):
            raise DivergedLoss(f"objective became non-finite at epoch {epoch + 1}")
        losses.append(j_epoch)
        log.debug("glove epoch %d: J=%.6f", epoch + 1, j_epoch)

    table = EmbeddingTable(tokens=tokens, w=w, w_ctx=w_ctx, b=b, b_ctx=b_ctx)
    return table, losses


def cosine_similarity(table: EmbeddingTable, token_a: str, token_b: str) -> float:
    """Cosine of the final vectors of two in-vocabulary tokens."""
    for tok in (token_a, token_b):
        if tok not in table:
            raise KeyError(f"token not in embedding table: {tok!r}")
    va, vb = table.vector(token_a), table.vector(token_b)
    na, nb = float(np.linalg.norm(va)), float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero embedding")
    return float(va @ vb / (na * nb))


def write_text_embeddings(path, table: EmbeddingTable) -> None:
    """Classic text export: header `|V| k`, then one `token v1..vk` row each.

    Rows hold the final (center + context) vectors printed with repr(),
    so every float survives a write/read cycle exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.tokens)} {table.k}\n")
        for tok in table.tokens:
            vec = table.vector(tok)
            fh.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def read_text_embeddings(path) -> EmbeddingTable:
    """Read the text export.

    The split into center and context halves is not recoverable from the
    final vectors, so the result stores them as center vectors with zero
    context vectors and biases; vector() and cosine_similarity() behave
    identically to the original table.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise PipelineError(f"{path}: malformed embedding header")
        n, k = int(header[0]), int(header[1])
        tokens: list[str] = []
        vecs = np.zeros((n, k), dtype=np.float64)
        for r in range(n):
            parts = fh.readline().split()
            if len(parts) != k + 1:
                raise PipelineError(f"{path}: malformed embedding row {r}")
            tokens.append(parts[0])
            vecs[r] = [float(p) for p in parts[1:]]
    zeros = np.zeros_like(vecs)
    return EmbeddingTable(
        tokens=tuple(tokens), w=vecs, w_ctx=zeros,
        b=np.zeros(n), b_ctx=np.zeros(n),
    )
