"""Neural readers: joint document/query embeddings and vocabulary logits.

Four architectures share the same output layer (a softmax over the entire
vocabulary; answer markers get no special treatment):

* ``deep``      stacked skip-connection LSTM over query ||| document
* ``attentive`` bidirectional encoders plus one attention pass over the document
* ``impatient`` re-attends to the document after every query token
* ``uniform``   the attentive reader with attention pinned to 1/|d|

All parameters are created in a fixed order from a seeded generator, so a
(seed, shape) pair pins every weight bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .layers import LSTMCell, bilstm_encode, uniform_init

DELIMITER = "|||"
ORDERS = ("qca", "cqa")
ARCHES = ("deep", "attentive", "impatient", "uniform")


@dataclass
class ReaderOutput:
    """Logits over the vocabulary plus whatever attention the reader produced.

    ``attention`` is a length-|d| vector for the attentive and uniform readers,
    a |q| x |d| matrix (one row per query token) for the impatient reader, and
    None for the deep reader.
    """
    logits: ad.Tensor
    attention: np.ndarray | None


def predict(g, W) -> np.ndarray:
    """Distribution over the vocabulary: softmax of W @ g, no masking."""
    gd = g.data if isinstance(g, ad.Tensor) else np.asarray(g, dtype=np.float64)
    Wd = W.data if isinstance(W, ad.Tensor) else np.asarray(W, dtype=np.float64)
    logits = Wd @ gd
    e = np.exp(logits - logits.max())
    return e / e.sum()


class Reader:
    """Common parameter registry, embedding and loss plumbing."""

    arch = ""

    def __init__(self, vocab_size: int, embed: int, hidden: int):
        self.vocab_size = vocab_size
        self.embed = embed
        self.hidden = hidden
        self.params: dict[str, ad.Tensor] = {}

    def _add(self, name: str, rng, shape) -> ad.Tensor:
        t = ad.parameter(uniform_init(rng, shape))
        self.params[name] = t
        return t

    def _add_zeros(self, name: str, shape) -> ad.Tensor:
        t = ad.parameter(np.zeros(shape))
        self.params[name] = t
        return t

    def _cell(self, rng, prefix: str, full_in: int, raw_in: int, out: int) -> LSTMCell:
        cell = LSTMCell(rng, full_in, raw_in, self.hidden, out, prefix)
        self.params.update(cell.params)
        return cell

    def embed_seq(self, ids) -> list[ad.Tensor]:
        table = self.params["embed"]
        return [ad.embedding_lookup(table, i) for i in ids]

    def forward(self, d_ids, q_ids) -> ReaderOutput:
        raise NotImplementedError

    def loss(self, d_ids, q_ids, answer_id: int) -> ad.Tensor:
        return ad.cross_entropy(self.forward(d_ids, q_ids).logits, answer_id)

    def config(self) -> dict:
        return {
            "arch": self.arch,
            "vocab_size": self.vocab_size,
            "embed": self.embed,
            "hidden": self.hidden,
        }


class DeepLSTMReader(Reader):
    """Stacked LSTM fed the query and document as one delimited sequence.

    Every layer receives the raw token embedding alongside the previous
    layer's projected output (a skip connection), except that each forget
    gate sees only the raw embedding. The joint embedding g is the
    concatenation of all layers' projected outputs at the final step.
    """

    arch = "deep"

    def __init__(self, rng, vocab_size: int, embed: int = 64, hidden: int = 64,
                 depth: int = 2, order: str = "qca", delim_id: int = 0):
        super().__init__(vocab_size, embed, hidden)
        if order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.depth = depth
        self.order = order
        self.delim_id = delim_id
        self._add("embed", rng, (vocab_size, embed))
        self.cells = []
        for k in range(depth):
            full_in = embed if k == 0 else embed + hidden
            self.cells.append(self._cell(rng, f"layer{k + 1}", full_in, embed, hidden))
        self._add("W_out", rng, (vocab_size, depth * hidden))

    def config(self) -> dict:
        c = super().config()
        c.update(depth=self.depth, order=self.order, delim_id=self.delim_id)
        return c

    def forward(self, d_ids, q_ids) -> ReaderOutput:
        if not d_ids or not q_ids:
            raise ValueError("document and query must be non-empty")
        for i in list(d_ids) + list(q_ids):
            if not 0 <= int(i) < self.vocab_size:
                raise IndexError(f"token id {i} outside vocabulary")
        if self.order == "qca":
            ids = list(q_ids) + [self.delim_id] + list(d_ids)
        else:
            ids = list(d_ids) + [self.delim_id] + list(q_ids)
        xs = self.embed_seq(ids)
        states = [cell.initial_state() for cell in self.cells]
        last_ys = [None] * self.depth
        for x in xs:
            below = None
            for k, cell in enumerate(self.cells):
                full = x if k == 0 else ad.concat(x, below)
                states[k] = cell.step(full, x, states[k])
                below = cell.output(states[k][0])
                last_ys[k] = below
        g = last_ys[0]
        for y in last_ys[1:]:
            g = ad.concat(g, y)
        logits = ad.matmul(self.params["W_out"], g)
        return ReaderOutput(logits=logits, attention=None)


class AttentiveReader(Reader):
    """Bidirectional encoders with one query-conditioned attention pass.

    The document summary r is the attention-weighted sum of per-token
    encodings; g = tanh(W_rg r + W_ug u) where u is the query summary.
    The scoring and combination layers carry no bias terms.
    """

    arch = "attentive"

    def __init__(self, rng, vocab_size: int, embed: int = 64, hidden: int = 64):
        super().__init__(vocab_size, embed, hidden)
        self._add("embed", rng, (vocab_size, embed))
        self.doc_fwd = self._cell(rng, "doc_fwd", embed, embed, hidden)
        self.doc_bwd = self._cell(rng, "doc_bwd", embed, embed, hidden)
        self.q_fwd = self._cell(rng, "q_fwd", embed, embed, hidden)
        self.q_bwd = self._cell(rng, "q_bwd", embed, embed, hidden)
        two_h = 2 * hidden
        self._add("W_ym", rng, (hidden, two_h))
        self._add("W_um", rng, (hidden, two_h))
        self._add("w_ms", rng, (hidden,))
        self._add("W_rg", rng, (two_h, two_h))
        self._add("W_ug", rng, (two_h, two_h))
        self._add("W_out", rng, (vocab_size, two_h))

    def encode(self, d_ids, q_ids):
        if not d_ids or not q_ids:
            raise ValueError("document and query must be non-empty")
        ys_d, _ = bilstm_encode(self.doc_fwd, self.doc_bwd, self.embed_seq(d_ids))
        _, u = bilstm_encode(self.q_fwd, self.q_bwd, self.embed_seq(q_ids))
        return ys_d, u

    def _combine(self, r: ad.Tensor, u: ad.Tensor) -> ad.Tensor:
        p = self.params
        g = ad.tanh(ad.add(ad.matmul(p["W_rg"], r), ad.matmul(p["W_ug"], u)))
        return ad.matmul(p["W_out"], g)

    def forward(self, d_ids, q_ids, attention_override=None) -> ReaderOutput:
        p = self.params
        ys_d, u = self.encode(d_ids, q_ids)
        Yd = ad.stack_cols(ys_d)
        if attention_override is None:
            m = ad.tanh(ad.add_col(ad.matmul(p["W_ym"], Yd), ad.matmul(p["W_um"], u)))
            s = ad.softmax(ad.matmul(p["w_ms"], m))
        else:
            s = ad.constant(np.asarray(attention_override, dtype=np.float64))
            if s.data.shape != (len(d_ids),):
                raise ad.ShapeError("attention override length must match the document")
        r = ad.matmul(Yd, s)
        return ReaderOutput(logits=self._combine(r, u), attention=s.data.copy())


class UniformReader(AttentiveReader):
    """Attentive reader with the scorer disabled: every token weighs 1/|d|.

    Shares the attentive parameter layout (same seed gives identical weights)
    but computes r as the plain column mean of the document encodings.
    """

    arch = "uniform"

    def forward(self, d_ids, q_ids) -> ReaderOutput:
        ys_d, u = self.encode(d_ids, q_ids)
        n = len(ys_d)
        total = ys_d[0]
        for y in ys_d[1:]:
            total = ad.add(total, y)
        r = ad.scale(total, 1.0 / n)
        weights = np.full(n, 1.0 / n)
        return ReaderOutput(logits=self._combine(r, u), attention=weights)


class ImpatientReader(Reader):
    """Re-reads the document once per query token, accumulating a summary.

    For each query position i the document is re-scored against the running
    summary r(i-1) and the query encoding at i; the new summary adds the
    attention-weighted document sum to a squashed recurrence of the old one.
    g combines r(|q|) with the bidirectional query summary u.
    """

    arch = "impatient"

    def __init__(self, rng, vocab_size: int, embed: int = 64, hidden: int = 64):
        super().__init__(vocab_size, embed, hidden)
        self._add("embed", rng, (vocab_size, embed))
        self.doc_fwd = self._cell(rng, "doc_fwd", embed, embed, hidden)
        self.doc_bwd = self._cell(rng, "doc_bwd", embed, embed, hidden)
        self.q_fwd = self._cell(rng, "q_fwd", embed, embed, hidden)
        self.q_bwd = self._cell(rng, "q_bwd", embed, embed, hidden)
        two_h = 2 * hidden
        self._add("W_dm", rng, (hidden, two_h))
        self._add("W_rm", rng, (hidden, two_h))
        self._add("W_qm", rng, (hidden, two_h))
        self._add("w_ms", rng, (hidden,))
        self._add("W_rr", rng, (two_h, two_h))
        self._add_zeros("r0", (two_h,))
        self._add("W_rg", rng, (two_h, two_h))
        self._add("W_qg", rng, (two_h, two_h))
        self._add("W_out", rng, (vocab_size, two_h))

    def forward(self, d_ids, q_ids) -> ReaderOutput:
        if not d_ids or not q_ids:
            raise ValueError("document and query must be non-empty")
        p = self.params
        ys_d, _ = bilstm_encode(self.doc_fwd, self.doc_bwd, self.embed_seq(d_ids))
        ys_q, u = bilstm_encode(self.q_fwd, self.q_bwd, self.embed_seq(q_ids))
        Yd = ad.stack_cols(ys_d)
        doc_scores = ad.matmul(p["W_dm"], Yd)
        zero = ad.constant(np.zeros(self.hidden))
        r = p["r0"]
        rows = []
        for yq in ys_q:
            shift = ad.affine(zero, mat_terms=[(p["W_rm"], r), (p["W_qm"], yq)])
            m = ad.tanh(ad.add_col(doc_scores, shift))
            s = ad.softmax(ad.matmul(p["w_ms"], m))
            r = ad.add(ad.matmul(Yd, s), ad.tanh(ad.matmul(p["W_rr"], r)))
            rows.append(s.data.copy())
        g = ad.tanh(ad.add(ad.matmul(p["W_rg"], r), ad.matmul(p["W_qg"], u)))
        logits = ad.matmul(p["W_out"], g)
        return ReaderOutput(logits=logits, attention=np.stack(rows))


def build_reader(arch: str, vocab_size: int, seed: int, embed: int = 64,
                 hidden: int = 64, depth: int = 2, order: str = "qca",
                 delim_id: int = 0) -> Reader:
    """Construct a reader with seeded, creation-order-deterministic weights."""
    rng = np.random.default_rng(seed)
    if arch == "deep":
        return DeepLSTMReader(rng, vocab_size, embed, hidden, depth, order, delim_id)
    if arch == "attentive":
        return AttentiveReader(rng, vocab_size, embed, hidden)
    if arch == "uniform":
        return UniformReader(rng, vocab_size, embed, hidden)
    if arch == "impatient":
        return ImpatientReader(rng, vocab_size, embed, hidden)
    raise ValueError(f"unknown arch {arch!r}; expected one of {ARCHES}")
