"""Recurrent building blocks: peephole LSTM cells and bidirectional encoding."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad

INIT_RANGE = 0.1
FORGET_BIAS = 1.0


def uniform_init(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape)


class LSTMCell:
    """LSTM cell whose cell state feeds every gate through a full matrix.

    The input, forget and output gates each receive the (previous or current)
    cell state via their own square weight matrix rather than a diagonal
    peephole. The forget gate sees only the raw timestep input ``x_raw`` while
    the other gates and the candidate see the (possibly skip-connected) full
    input; with a single layer the two inputs coincide.

    Each hidden state is passed through a learned linear projection to produce
    the cell's per-step output.
    """

    def __init__(self, rng: np.random.Generator, full_in: int, raw_in: int,
                 hidden: int, out: int, prefix: str):
        self.full_in = full_in
        self.raw_in = raw_in
        self.hidden = hidden
        self.out = out
        self.prefix = prefix

        def w(name, shape):
            return prefix + "." + name, ad.parameter(uniform_init(rng, shape))

        def b(name, n, fill=0.0):
            return prefix + "." + name, ad.parameter(np.full(n, fill))

        h = hidden
        # creation order fixes both the rng stream and checkpoint layout
        self.params: dict[str, ad.Tensor] = dict([
            w("W_xi", (h, full_in)), w("W_hi", (h, h)), w("W_ci", (h, h)), b("b_i", h),
            w("W_xf", (h, raw_in)), w("W_hf", (h, h)), w("W_cf", (h, h)),
            b("b_f", h, FORGET_BIAS),
            w("W_xc", (h, full_in)), w("W_hc", (h, h)), b("b_c", h),
            w("W_xo", (h, full_in)), w("W_ho", (h, h)), w("W_co", (h, h)), b("b_o", h),
            w("W_y", (out, h)), b("b_y", out),
        ])

    def _p(self, name: str) -> ad.Tensor:
        return self.params[self.prefix + "." + name]

    def initial_state(self):
        z = np.zeros(self.hidden)
        return ad.constant(z), ad.constant(z.copy())

    def step(self, x_full: ad.Tensor, x_raw: ad.Tensor, state):
        """One timestep; returns the new (h, c) state pair."""
        h_prev, c_prev = state
        p = self._p
        i = ad.sigmoid(ad.affine(p("b_i"), mat_terms=[
            (p("W_xi"), x_full), (p("W_hi"), h_prev), (p("W_ci"), c_prev)]))
        f = ad.sigmoid(ad.affine(p("b_f"), mat_terms=[
            (p("W_xf"), x_raw), (p("W_hf"), h_prev), (p("W_cf"), c_prev)]))
        cand = ad.tanh(ad.affine(p("b_c"), mat_terms=[
            (p("W_xc"), x_full), (p("W_hc"), h_prev)]))
        c = ad.add(ad.mul(f, c_prev), ad.mul(i, cand))
        o = ad.sigmoid(ad.affine(p("b_o"), mat_terms=[
            (p("W_xo"), x_full), (p("W_ho"), h_prev), (p("W_co"), c)]))
        h = ad.mul(o, ad.tanh(c))
        return h, c

    def output(self, h: ad.Tensor) -> ad.Tensor:
        """Projected per-step output of a hidden state."""
        return ad.affine(self._p("b_y"), mat_terms=[(self._p("W_y"), h)])


def run_cell(cell: LSTMCell, xs) -> list:
    """Run ``cell`` left to right over equal-role inputs; projected outputs per step."""
    state = cell.initial_state()
    ys = []
    for x in xs:
        state = cell.step(x, x, state)
        ys.append(cell.output(state[0]))
    return ys


def bilstm_encode(fwd: LSTMCell, bwd: LSTMCell, xs):
    """Bidirectional encoding of a sequence of input vectors.

    Returns (ys, u): ``ys[t]`` is the forward output at t concatenated with
    the backward output at t, and ``u`` is the forward output at the last
    position concatenated with the backward output at the first.
    """
    if not xs:
        raise ad.ShapeError("cannot encode an empty sequence")
    ys_f = run_cell(fwd, xs)
    ys_b = run_cell(bwd, list(reversed(xs)))[::-1]
    ys = [ad.concat(f, b) for f, b in zip(ys_f, ys_b)]
    u = ad.concat(ys_f[-1], ys_b[0])
    return ys, u
