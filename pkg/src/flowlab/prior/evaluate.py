"""Held-out evaluation of a trained prior: does it tell right from wrong?

Two probes, both pairing each sample with a random OTHER sample:
discrimination scores the true flow against the other sample's flow under
the same image; conditioning scores the true flow under the matching image
against the other sample's image.  A useful conditional prior should win
both comparisons on most samples.
"""

import numpy as np
import torch

from .train import stack_training_tensors

__all__ = ["score_log_q", "discrimination_stats", "conditioning_stats"]


def _derangement(n, rng):
    """Permutation with no fixed points (pairs every i with some j != i)."""
    if n < 2:
        raise ValueError("need at least 2 samples to build comparisons")
    perm = rng.permutation(n)
    for i in np.flatnonzero(perm == np.arange(n)):
        j = (i + 1) % n
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def score_log_q(model, flows, images, batch_size=32):
    """log_q per sample, evaluated without gradients in batches."""
    out = []
    with torch.no_grad():
        for i in range(0, len(flows), batch_size):
            out.append(model.log_prior(flows[i : i + batch_size], images[i : i + batch_size]).log_q)
    return torch.cat(out).cpu().numpy().astype(np.float64)


def _paired_stats(lq_pos, lq_neg):
    diff = lq_pos - lq_neg
    return {
        "n": int(len(diff)),
        "win_rate": float((diff > 0).mean()),
        "gap": float(diff.mean()),
        "log_q_pos_mean": float(lq_pos.mean()),
        "log_q_neg_mean": float(lq_neg.mean()),
    }


def discrimination_stats(model, samples, seed=0):
    """True flow vs. a shuffled sample's flow, both under the true image."""
    flows, images = stack_training_tensors(samples)
    perm = _derangement(len(samples), np.random.default_rng(seed))
    lq_true = score_log_q(model, flows, images)
    lq_shuf = score_log_q(model, flows[perm], images)
    return _paired_stats(lq_true, lq_shuf)


def conditioning_stats(model, samples, seed=0):
    """True flow under its own image vs. under a shuffled sample's image."""
    flows, images = stack_training_tensors(samples)
    perm = _derangement(len(samples), np.random.default_rng(seed + 1))
    lq_match = score_log_q(model, flows, images)
    lq_mismatch = score_log_q(model, flows, images[perm])
    return _paired_stats(lq_match, lq_mismatch)
