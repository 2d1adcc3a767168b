"""Synthetic paired features with planted confuser clusters, and VSEF I/O.

Every image gets a unit latent ``z`` in R^L.  Image features are
``A z + noise`` and each of its captions is ``B z + noise``, where ``A`` and
``B`` have orthonormal columns, so ``W_f = A, W_g = B`` recovers the
latents exactly when the noise is zero.  Confuser clusters are groups of
images whose latents sit within a small angle of a shared center.

VSEF layout (little endian): ``b"VSEF"``, then uint32 version, n_images,
d_img, d_cap, cpi, then float32 image rows, then float32 caption rows
(image-major).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

MAGIC = b"VSEF"
VERSION = 1
_HEADER = struct.Struct("<4s5I")
_MAX_FLOATS = 1 << 34


@dataclass(frozen=True)
class SyntheticSpec:
    n_images: int
    cpi: int = 5
    latent_dim: int = 16
    d_img: int = 64
    d_cap: int = 48
    noise_sigma: float = 0.05
    confuser_cluster_size: int = 4
    confuser_fraction: float = 0.0
    confuser_angle_deg: float = 10.0
    seed: int = 0
    # seeds A and B; datasets that share it live in the same feature space
    basis_seed: int = 0

    def validate(self):
        if self.n_images < 1:
            raise ConfigurationError(f"n_images must be positive, got {self.n_images}")
        if self.cpi < 1:
            raise ConfigurationError(f"cpi must be positive, got {self.cpi}")
        if self.latent_dim < 1:
            raise ConfigurationError(f"latent_dim must be positive, got {self.latent_dim}")
        if self.latent_dim > min(self.d_img, self.d_cap):
            raise ConfigurationError(
                f"latent_dim {self.latent_dim} exceeds min(d_img, d_cap) = {min(self.d_img, self.d_cap)}"
            )
        if not self.noise_sigma >= 0:
            raise ConfigurationError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.confuser_cluster_size < 1:
            raise ConfigurationError("confuser_cluster_size must be >= 1")
        if not 0 <= self.confuser_fraction <= 1:
            raise ConfigurationError(f"confuser_fraction must be in [0, 1], got {self.confuser_fraction}")
        if not 0 <= self.confuser_angle_deg <= 180:
            raise ConfigurationError("confuser_angle_deg must be in [0, 180]")


@dataclass
class PairedFeatureSet:
    image_features: np.ndarray
    caption_features: np.ndarray
    cpi: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n_i = self.image_features.shape[0]
        if self.caption_features.shape[0] != n_i * self.cpi:
            raise ConfigurationError(
                f"{self.caption_features.shape[0]} caption rows do not match {n_i} images x {self.cpi}"
            )

    @property
    def n_images(self) -> int:
        return self.image_features.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.caption_features.shape[0]

    def pair_features(self, pairs):
        """Image and caption feature rows for training pair indices."""
        pairs = np.asarray(pairs, dtype=np.int64)
        return self.image_features[pairs // self.cpi], self.caption_features[pairs]

    def subset(self, lo: int, hi: int) -> "PairedFeatureSet":
        return PairedFeatureSet(
            self.image_features[lo:hi], self.caption_features[lo * self.cpi:hi * self.cpi], self.cpi
        )


def projection_bases(spec: SyntheticSpec):
    """The orthonormal-column maps ``A`` (d_img x L) and ``B`` (d_cap x L)."""
    rng = np.random.default_rng([spec.basis_seed, 0xB5])
    A, _ = np.linalg.qr(rng.standard_normal((spec.d_img, spec.latent_dim)))
    B, _ = np.linalg.qr(rng.standard_normal((spec.d_cap, spec.latent_dim)))
    return A, B


def _unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def sample_latents(spec: SyntheticSpec, rng):
    """Unit latents plus a cluster label per image (-1 = unclustered)."""
    n, L, G = spec.n_images, spec.latent_dim, spec.confuser_cluster_size
    z = _unit_rows(rng.standard_normal((n, L)))
    labels = np.full(n, -1, dtype=np.int64)
    n_clusters = int(spec.confuser_fraction * n) // G
    if n_clusters and G > 1:
        members = rng.permutation(n)[: n_clusters * G].reshape(n_clusters, G)
        max_angle = np.deg2rad(spec.confuser_angle_deg)
        for c, idx in enumerate(members):
            center = _unit_rows(rng.standard_normal((1, L)))[0]
            tangent = rng.standard_normal((G, L))
            tangent -= np.outer(tangent @ center, center)
            tangent = _unit_rows(tangent)
            angle = rng.uniform(0.0, max_angle, size=(G, 1))
            z[idx] = np.cos(angle) * center + np.sin(angle) * tangent
            labels[idx] = c
    return z, labels


def generate(spec: SyntheticSpec) -> PairedFeatureSet:
    spec.validate()
    A, B = projection_bases(spec)
    rng = np.random.default_rng(spec.seed)
    z, labels = sample_latents(spec, rng)
    img = z @ A.T + spec.noise_sigma * rng.standard_normal((spec.n_images, spec.d_img))
    cap_latent = np.repeat(z, spec.cpi, axis=0)
    cap = cap_latent @ B.T + spec.noise_sigma * rng.standard_normal((spec.n_images * spec.cpi, spec.d_cap))
    # stored precision, so a VSEF round trip is lossless
    return PairedFeatureSet(
        img.astype(np.float32), cap.astype(np.float32), spec.cpi, {"latents": z, "cluster": labels}
    )


def write_features(fs: PairedFeatureSet, path) -> None:
    img = np.ascontiguousarray(fs.image_features, dtype="<f4")
    cap = np.ascontiguousarray(fs.caption_features, dtype="<f4")
    header = _HEADER.pack(MAGIC, VERSION, fs.n_images, img.shape[1], cap.shape[1], fs.cpi)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.tobytes())
        fh.write(cap.tobytes())


def read_features(path) -> PairedFeatureSet:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("magic", "bad magic")
    if len(data) < _HEADER.size:
        raise FormatError("header", "truncated header")
    _, version, n_images, d_img, d_cap, cpi = _HEADER.unpack_from(data)
    if version != VERSION:
        raise FormatError("version", f"version mismatch: file has {version}, expected {VERSION}")
    n_img_floats = n_images * d_img
    n_cap_floats = n_images * cpi * d_cap
    if n_img_floats + n_cap_floats > _MAX_FLOATS:
        raise FormatError("dimensions", "dimension overflow")
    if cpi < 1 or d_img < 1 or d_cap < 1:
        raise FormatError("dimensions", "zero dimension in header")
    expected = _HEADER.size + 4 * (n_img_floats + n_cap_floats)
    if len(data) < expected:
        raise FormatError("payload", "truncated payload")
    if len(data) > expected:
        raise FormatError("payload", "trailing bytes after payload")
    off = _HEADER.size
    img = np.frombuffer(data, dtype="<f4", count=n_img_floats, offset=off).reshape(n_images, d_img)
    cap = np.frombuffer(data, dtype="<f4", count=n_cap_floats, offset=off + 4 * n_img_floats)
    cap = cap.reshape(n_images * cpi, d_cap)
    return PairedFeatureSet(img.astype(np.float32), cap.astype(np.float32), int(cpi))
