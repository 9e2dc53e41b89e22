"""Shallow feature-space alignment applied before training.

PDS standardizes each domain's video features with its own per-dimension
mean and population std. CORAL additionally re-colors the (standardized)
source features so their covariance matches the target's; target features
pass through untouched. Both are fit once, applied once, and serialized into
checkpoints so evaluation applies the identical transforms.

Stateless after fit; safe to share across threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Gallery
from .errors import DimensionMismatchError, GalleryError

log = logging.getLogger(__name__)

STD_FLOOR = 1e-8
BASELINES = ("none", "pds", "coral")


@dataclass(frozen=True)
class PdsStats:
    source_mean: np.ndarray
    source_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray


def _mean_std(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population (1/n)
    floored = std < STD_FLOOR
    if floored.any():
        log.warning("PDS: %d constant dimensions, std floored at %.0e",
                    int(floored.sum()), STD_FLOOR)
        std = np.where(floored, STD_FLOOR, std)
    return mean, std


def pds_fit(source_features: np.ndarray, target_features: np.ndarray) -> PdsStats:
    for name, x in (("source", source_features), ("target", target_features)):
        if x.shape[0] < 2:
            raise GalleryError(f"PDS needs at least 2 {name} items, got {x.shape[0]}")
    if source_features.shape[1] != target_features.shape[1]:
        raise DimensionMismatchError("PDS feature dims", source_features.shape[1],
                                     target_features.shape[1])
    sm, ss = _mean_std(source_features)
    tm, ts = _mean_std(target_features)
    return PdsStats(sm, ss, tm, ts)


def pds_apply(stats: PdsStats, features: np.ndarray, domain: str) -> np.ndarray:
    if domain == "source":
        return (features - stats.source_mean) / stats.source_std
    if domain == "target":
        return (features - stats.target_mean) / stats.target_std
    raise ValueError(f"unknown domain {domain!r}")


@dataclass(frozen=True)
class CoralTransform:
    matrix: np.ndarray        # (d, d): whiten by source cov, recolor by target cov
    source_mean: np.ndarray   # removed before the matrix, restored after


def _sym_root(cov: np.ndarray, power: float) -> np.ndarray:
    """cov**power via symmetric eigendecomposition; cov must be regularized PSD."""
    eigvals, eigvecs = np.linalg.eigh(cov)
    return (eigvecs * np.power(eigvals, power)) @ eigvecs.T


def _population_cov(x: np.ndarray) -> np.ndarray:
    centered = x - x.mean(axis=0)
    return centered.T @ centered / x.shape[0]


def coral_fit(source_features: np.ndarray, target_features: np.ndarray) -> CoralTransform:
    """Whitening-recoloring matrix matching source covariance to target's.

    Each covariance gets a lam*I ridge with lam = 1e-3 * trace/d before the
    matrix roots, which keeps near-singular estimates invertible.
    """
    d = source_features.shape[1]
    if target_features.shape[1] != d:
        raise DimensionMismatchError("CORAL feature dims", d, target_features.shape[1])
    if source_features.shape[0] < 2 or target_features.shape[0] < 2:
        raise GalleryError("CORAL needs at least 2 items per domain")
    cov_s = _population_cov(source_features)
    cov_t = _population_cov(target_features)
    cov_s = cov_s + np.eye(d) * (1e-3 * np.trace(cov_s) / d)
    cov_t = cov_t + np.eye(d) * (1e-3 * np.trace(cov_t) / d)
    matrix = _sym_root(cov_s, -0.5) @ _sym_root(cov_t, 0.5)
    return CoralTransform(matrix=matrix, source_mean=source_features.mean(axis=0))


def coral_apply(transform: CoralTransform, source_features: np.ndarray) -> np.ndarray:
    """Transform source features only; the covariance changes, the mean stays."""
    centered = source_features - transform.source_mean
    return centered @ transform.matrix + transform.source_mean


@dataclass(frozen=True)
class DomainTransform:
    """The full pre-training transform pipeline for one run."""

    mode: str = "none"
    pds: PdsStats | None = None
    coral: CoralTransform | None = None

    def apply_video(self, features: np.ndarray, domain: str) -> np.ndarray:
        if self.mode == "none":
            return np.asarray(features, dtype=np.float64)
        out = pds_apply(self.pds, features, domain)
        if self.mode == "coral" and domain == "source":
            out = coral_apply(self.coral, out)
        return np.ascontiguousarray(out)

    def apply_gallery(self, gallery: Gallery) -> Gallery:
        return gallery.with_video(self.apply_video(gallery.video, gallery.domain))

    def to_arrays(self) -> dict:
        arrays = {}
        if self.pds is not None:
            arrays["transform.pds.source_mean"] = self.pds.source_mean
            arrays["transform.pds.source_std"] = self.pds.source_std
            arrays["transform.pds.target_mean"] = self.pds.target_mean
            arrays["transform.pds.target_std"] = self.pds.target_std
        if self.coral is not None:
            arrays["transform.coral.matrix"] = self.coral.matrix
            arrays["transform.coral.source_mean"] = self.coral.source_mean
        return arrays

    @classmethod
    def from_arrays(cls, mode: str, arrays: dict) -> "DomainTransform":
        if mode == "none":
            return cls()
        pds = PdsStats(
            arrays["transform.pds.source_mean"],
            arrays["transform.pds.source_std"],
            arrays["transform.pds.target_mean"],
            arrays["transform.pds.target_std"],
        )
        coral = None
        if mode == "coral":
            coral = CoralTransform(arrays["transform.coral.matrix"],
                                   arrays["transform.coral.source_mean"])
        return cls(mode=mode, pds=pds, coral=coral)


def fit_domain_transform(mode: str, source_video: np.ndarray,
                         target_video: np.ndarray) -> DomainTransform:
    if mode not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}, got {mode!r}")
    if mode == "none":
        return DomainTransform()
    pds = pds_fit(source_video, target_video)
    if mode == "pds":
        return DomainTransform(mode="pds", pds=pds)
    coral = coral_fit(pds_apply(pds, source_video, "source"),
                      pds_apply(pds, target_video, "target"))
    return DomainTransform(mode="coral", pds=pds, coral=coral)
