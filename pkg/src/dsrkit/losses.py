"""Objective functions: triplet hinge, GE2E (softmax variant), CTC,
per-step cross-entropy, and their weighted ASR combination.

Every loss returns analytic gradients alongside the value; the test suite
holds them to central finite differences. CTC is computed entirely in log
space so it stays comparable to an exhaustive alignment enumeration.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyInputError,
    InfeasibleAlignmentError,
    InsufficientBatchError,
    NumericError,
    ParameterError,
    ShapeError,
    ValidationError,
)

GE2E_W_FLOOR = 1e-6


@dataclass(frozen=True)
class Ge2eScale:
    """Learned similarity scale S = w * cos + b; w stays strictly positive."""

    w: float = 10.0
    b: float = -5.0

    def __post_init__(self):
        if self.w <= 0:
            raise ParameterError("Ge2eScale w must be positive")

    def stepped(self, grad_w: float, grad_b: float, lr: float) -> "Ge2eScale":
        """SGD update with the positivity projection on w."""
        return Ge2eScale(max(self.w - lr * grad_w, GE2E_W_FLOOR), self.b - lr * grad_b)


def triplet_loss(anchor, positive, negative, alpha: float):
    """Hinge on squared distances: max(|a-p|^2 - |a-n|^2 + alpha, 0).

    Returns (loss, grad_anchor, grad_positive, grad_negative). The
    subgradient at the kink is 0, so an exactly-met margin does not move
    any embedding.
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    n = np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape) or a.ndim != 1:
        raise ShapeError("anchor, positive, negative must be vectors of one shape")
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    ap = a - p
    an = a - n
    raw = float(ap @ ap - an @ an) + alpha
    if raw <= 0.0:
        z = np.zeros_like(a)
        return 0.0, z, z.copy(), z.copy()
    return raw, 2.0 * (n - p), -2.0 * ap, 2.0 * an


def ge2e_loss(embeddings, scale: Ge2eScale):
    """Softmax GE2E over an (N speakers, M utterances, D) stack.

    Similarity of utterance (j, i) to speaker k is w*cos(e_ji, c_k) + b,
    where the own-speaker centroid leaves utterance i out. Returns
    (loss, grad_embeddings, grad_w, grad_b); grad_b is analytically 0 for
    the softmax variant but is still reported for the optimizer loop.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 3:
        raise ShapeError("embeddings must be a (N, M, D) stack")
    n_spk, n_utt, _ = emb.shape
    if n_spk < 2 or n_utt < 2:
        raise InsufficientBatchError("GE2E needs at least 2 speakers x 2 utterances")
    e_norms = np.linalg.norm(emb, axis=2)
    if np.any(e_norms < 1e-300):
        raise NumericError("zero-norm embedding in GE2E batch")
    sums = emb.sum(axis=1)
    full_cent = sums / n_utt
    loss = 0.0
    demb = np.zeros_like(emb)
    dw = 0.0
    db = 0.0
    for j in range(n_spk):
        for i in range(n_utt):
            e = emb[j, i]
            en = e_norms[j, i]
            cents = full_cent.copy()
            cents[j] = (sums[j] - e) / (n_utt - 1)
            cnorms = np.linalg.norm(cents, axis=1)
            if np.any(cnorms < 1e-300):
                raise NumericError("zero-norm centroid in GE2E batch")
            cos = cents @ e / (cnorms * en)
            sim = scale.w * cos + scale.b
            top = np.max(sim)
            lse = top + np.log(np.sum(np.exp(sim - top)))
            loss += lse - sim[j]
            dsim = np.exp(sim - lse)
            dsim[j] -= 1.0
            dw += float(dsim @ cos)
            db += float(dsim.sum())
            for k in range(n_spk):
                coef = scale.w * dsim[k]
                ck = cents[k]
                dcos_de = ck / (cnorms[k] * en) - cos[k] * e / (en * en)
                dcos_dc = e / (cnorms[k] * en) - cos[k] * ck / (cnorms[k] * cnorms[k])
                demb[j, i] += coef * dcos_de
                if k == j:
                    spread = coef * dcos_dc / (n_utt - 1)
                    demb[j] += spread
                    demb[j, i] -= spread
                else:
                    demb[k] += coef * dcos_dc / n_utt
    return loss, demb, dw, db


def validate_logprobs(logprobs, tol: float = 1e-9) -> None:
    """Each row must log-normalize: logsumexp(row) = 0 within tol."""
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2:
        raise ShapeError("log-probability sequence must be a (T, K) matrix")
    top = np.max(lp, axis=1)
    lse = top + np.log(np.sum(np.exp(lp - top[:, None]), axis=1))
    if np.any(np.abs(lse) > tol):
        raise ValidationError("log-probability rows do not normalize to 1")


def ctc_loss(logprobs, target, blank: int = 0, validate: bool = True):
    """Negative log total probability of all alignments collapsing to target.

    Forward algorithm in log space over the blank-extended label sequence;
    the gradient w.r.t. the log-probabilities comes from forward-backward
    state occupancies. Set validate=False to treat the inputs as free
    variables (finite-difference probes break row normalization).
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2:
        raise ShapeError("log-probability sequence must be a (T, K) matrix")
    n_steps, n_symbols = lp.shape
    if n_steps < 1:
        raise EmptyInputError("need at least one time step")
    if not 0 <= blank < n_symbols:
        raise ParameterError(f"blank index {blank} outside alphabet of {n_symbols}")
    labels = [int(s) for s in target]
    for s in labels:
        if not 0 <= s < n_symbols:
            raise ParameterError(f"target symbol {s} outside alphabet of {n_symbols}")
        if s == blank:
            raise ParameterError("target may not contain the blank symbol")
    if validate:
        validate_logprobs(lp)
    repeats = sum(1 for u in range(1, len(labels)) if labels[u] == labels[u - 1])
    if n_steps < len(labels) + repeats:
        raise InfeasibleAlignmentError(
            f"{n_steps} steps cannot align to {len(labels)} labels "
            f"with {repeats} repeat separators"
        )
    ext = [blank]
    for s in labels:
        ext += [s, blank]
    n_states = len(ext)
    neg = -np.inf
    alpha = np.full((n_steps, n_states), neg)
    alpha[0, 0] = lp[0, ext[0]]
    if n_states > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, n_steps):
        for s in range(n_states):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = np.logaddexp(acc, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc = np.logaddexp(acc, alpha[t - 1, s - 2])
            alpha[t, s] = acc + lp[t, ext[s]]
    log_z = alpha[n_steps - 1, n_states - 1]
    if n_states > 1:
        log_z = np.logaddexp(log_z, alpha[n_steps - 1, n_states - 2])
    if not np.isfinite(log_z):
        raise NumericError("every alignment has zero probability")
    # beta excludes the emission at t, so alpha + beta is the log mass of
    # complete paths occupying state s at time t.
    beta = np.full((n_steps, n_states), neg)
    beta[n_steps - 1, n_states - 1] = 0.0
    if n_states > 1:
        beta[n_steps - 1, n_states - 2] = 0.0
    for t in range(n_steps - 2, -1, -1):
        for s in range(n_states):
            acc = beta[t + 1, s] + lp[t + 1, ext[s]]
            if s + 1 < n_states:
                acc = np.logaddexp(acc, beta[t + 1, s + 1] + lp[t + 1, ext[s + 1]])
            if s + 2 < n_states and ext[s + 2] != blank and ext[s + 2] != ext[s]:
                acc = np.logaddexp(acc, beta[t + 1, s + 2] + lp[t + 1, ext[s + 2]])
            beta[t, s] = acc
    occupancy = np.exp(alpha + beta - log_z)
    grad = np.zeros_like(lp)
    for s in range(n_states):
        grad[:, ext[s]] -= occupancy[:, s]
    return float(-log_z), grad


def s2s_ce_loss(logprobs, target, validate: bool = True):
    """Mean per-step negative log-probability of the target symbols.

    Returns (loss, grad w.r.t. logprobs).
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2:
        raise ShapeError("log-probability sequence must be a (T, K) matrix")
    labels = [int(s) for s in target]
    if not labels:
        raise EmptyInputError("target must contain at least one symbol")
    if lp.shape[0] != len(labels):
        raise ShapeError(f"{lp.shape[0]} steps for {len(labels)} target symbols")
    for s in labels:
        if not 0 <= s < lp.shape[1]:
            raise ParameterError(f"target symbol {s} outside alphabet of {lp.shape[1]}")
    if validate:
        validate_logprobs(lp)
    rows = np.arange(len(labels))
    loss = float(-np.mean(lp[rows, labels]))
    grad = np.zeros_like(lp)
    grad[rows, labels] = -1.0 / len(labels)
    return loss, grad


def asr_loss(l_s2s: float, l_ctc: float, lambda_s2s: float = 0.5) -> float:
    """Weighted sum lambda * l_s2s + (1 - lambda) * l_ctc."""
    if not 0.0 <= lambda_s2s <= 1.0:
        raise ParameterError(f"lambda_s2s {lambda_s2s} outside [0, 1]")
    return lambda_s2s * l_s2s + (1.0 - lambda_s2s) * l_ctc
