"""Shared test helpers."""

import numpy as np


def boost_target(reader, d_ids, q_ids, target: int, margin: float = 20.0,
                 pre_scale: float = 2.0) -> None:
    """Move the reader to a point where it predicts ``target`` confidently.

    Central differences with step 1e-5 resolve a gradient coordinate only down
    to about ulp(loss)/2e-5. At a generic weight point the loss is order
    ln|V| and that floor (~1e-11) swamps the many near-zero gradients of a
    deep recurrent net. Evaluating where the loss itself is tiny shrinks the
    floor by several orders of magnitude while every parameter still
    participates.

    Two adjustments keep the eps^2 truncation term small as well: weights are
    scaled up moderately so the joint embedding g has a usable norm, and the
    target's output row then moves by the minimum-norm increment along g, so
    the loss's log-derivatives stay bounded by roughly margin/|g|.
    """
    for t in reader.params.values():
        t.data *= pre_scale
    logits = reader.forward(d_ids, q_ids).logits.data
    W = reader.params["W_out"].data
    # logits were produced as W @ g, so least squares recovers g to rounding
    g, *_ = np.linalg.lstsq(W, logits, rcond=None)
    alpha = margin + logits.max() - logits[target]
    W[target] += alpha * g / float(g @ g)
