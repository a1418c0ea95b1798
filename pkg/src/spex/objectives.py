"""Scale-invariant SDR, the multi-scale reconstruction loss, speaker
cross-entropy, and their weighted combination.

Everything exists twice on purpose: a plain-numpy scalar path for
evaluation and reporting, and a tape path over Tensors for training.
Both transcribe the same formula: after removing the means,

    rho(est, ref) = 10*log10(|proj|^2 / (|est - proj|^2 + eps)),
    proj = (<est, ref>/<ref, ref>) * ref.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import net_core as nc
from .errors import SilentReferenceError
from .net_core import Tensor

SI_SDR_EPS = 1e-8  # added to the error energy only
_LOG10 = float(np.log(10.0))


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar views of one loss evaluation (batch means, dB for rhos)."""

    j1: float
    j2: float
    total: float
    rho1: float
    rho2: float
    rho3: float


def si_sdr(est, ref) -> float:
    """Scale-invariant signal-to-distortion ratio in dB (numpy path)."""
    est = np.asarray(est, dtype=np.float64).reshape(-1)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1)
    if est.shape != ref.shape or est.size < 2:
        raise ValueError(f"need equal lengths >= 2, got {est.size} vs {ref.size}")
    est = est - est.mean()
    ref = ref - ref.mean()
    ref_energy = float(ref @ ref)
    if ref_energy == 0.0:
        raise SilentReferenceError("reference is identically zero after mean removal")
    proj = (float(est @ ref) / ref_energy) * ref
    err = est - proj
    return float(10.0 * np.log10((proj @ proj) / (float(err @ err) + SI_SDR_EPS)))


def si_sdr_improvement(est, mixture, ref) -> float:
    """How much the estimate gains over the unprocessed mixture, in dB."""
    return si_sdr(est, ref) - si_sdr(mixture, ref)


def si_sdr_rho(est: Tensor, ref) -> Tensor:
    """Differentiable per-item SI-SDR: (batch, T) -> (batch,) in dB."""
    est = nc.as_tensor(est)
    ref = np.asarray(ref.data if isinstance(ref, Tensor) else ref, dtype=np.float64)
    if est.shape != ref.shape:
        raise ValueError(f"est {est.shape} vs ref {ref.shape}")
    ref = ref - ref.mean(axis=1, keepdims=True)
    ref_energy = (ref * ref).sum(axis=1)
    if np.any(ref_energy == 0.0):
        raise SilentReferenceError("reference is identically zero after mean removal")
    ref_t = Tensor(ref)
    est = nc.sub(est, nc.mean(est, axis=1, keepdims=True))
    dot = nc.sum_(nc.mul(est, ref_t), axis=1, keepdims=True)
    proj = nc.mul(nc.div(dot, Tensor(ref_energy[:, None])), ref_t)
    err = nc.sub(est, proj)
    num = nc.sum_(nc.square(proj), axis=1)
    den = nc.add(nc.sum_(nc.square(err), axis=1), SI_SDR_EPS)
    return nc.mul(10.0 / _LOG10, nc.log(nc.div(num, den)))


def combine_rhos(rho1, rho2, rho3, alpha: float, beta: float):
    """-[(1-a-b)*rho1 + a*rho2 + b*rho3]; works on floats or Tensors."""
    if any(isinstance(r, Tensor) for r in (rho1, rho2, rho3)):
        weighted = nc.add(
            nc.add(nc.mul(1.0 - alpha - beta, rho1), nc.mul(alpha, rho2)),
            nc.mul(beta, rho3),
        )
        return nc.mul(-1.0, weighted)
    return -(((1.0 - alpha - beta) * rho1 + alpha * rho2) + beta * rho3)


def multiscale_loss(result, target, alpha: float, beta: float) -> Tensor:
    """J1 = -[(1-a-b)*rho(s1,s) + a*rho(s2,s) + b*rho(s3,s)], batch-meaned.

    Per-scale rhos are reduced over the batch first, so the scalar
    identity against the reported per-scale values is exact.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if target.ndim == 1:
        target = target[None, :]
    rho1 = nc.mean(si_sdr_rho(result.s1, target))
    rho2 = nc.mean(si_sdr_rho(result.s2, target))
    rho3 = nc.mean(si_sdr_rho(result.s3, target))
    return combine_rhos(rho1, rho2, rho3, alpha, beta)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of the true speaker (natural log)."""
    logits = nc.as_tensor(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n_classes = logits.shape[1]
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise IndexError(f"labels must be in [0, {n_classes}), got {labels}")
    picked = nc.take_class(nc.log_softmax(logits, axis=1), labels)
    return nc.mul(-1.0, nc.mean(picked))


def total_loss(j1, j2, gamma: float):
    """J = (1-gamma)*J1 + gamma*J2; works on floats or Tensors."""
    if isinstance(j1, Tensor) or isinstance(j2, Tensor):
        return nc.add(nc.mul(1.0 - gamma, j1), nc.mul(gamma, j2))
    return (1.0 - gamma) * j1 + gamma * j2


def spex_loss(result, target, logits, labels, config) -> tuple:
    """Full training objective; returns (scalar Tensor, LossBreakdown)."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if target.ndim == 1:
        target = target[None, :]
    rho1 = nc.mean(si_sdr_rho(result.s1, target))
    rho2 = nc.mean(si_sdr_rho(result.s2, target))
    rho3 = nc.mean(si_sdr_rho(result.s3, target))
    j1 = combine_rhos(rho1, rho2, rho3, config.alpha, config.beta)
    j2 = cross_entropy(logits, labels)
    total = total_loss(j1, j2, config.gamma)
    breakdown = LossBreakdown(
        j1=float(j1.data),
        j2=float(j2.data),
        total=float(total.data),
        rho1=float(rho1.data),
        rho2=float(rho2.data),
        rho3=float(rho3.data),
    )
    return total, breakdown
