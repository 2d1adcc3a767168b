"""Linear joint-embedding model: projections, normalization, similarity."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import ConfigurationError, DegenerateInputError, EmptyBatchError


class SimilarityKind(str, enum.Enum):
    INNER_PRODUCT = "ip"
    ORDER = "order"

    @classmethod
    def parse(cls, value) -> "SimilarityKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown similarity kind {value!r}") from None


@dataclass
class ProjectionModel:
    """Projection matrices ``W_f`` (D_img x D) and ``W_g`` (D_cap x D).

    When ``abs_before_similarity`` is set the absolute value is taken after
    normalization, so normalized embeddings stay on the unit sphere.
    """

    W_f: np.ndarray
    W_g: np.ndarray
    normalize_image: bool = True
    normalize_caption: bool = True
    abs_before_similarity: bool = False

    def __post_init__(self):
        self.W_f = np.asarray(self.W_f, dtype=np.float64)
        self.W_g = np.asarray(self.W_g, dtype=np.float64)
        if self.W_f.ndim != 2 or self.W_g.ndim != 2:
            raise ConfigurationError("projection matrices must be 2-D")
        if self.W_f.shape[1] != self.W_g.shape[1]:
            raise ConfigurationError(
                f"embedding dimension mismatch: W_f has {self.W_f.shape[1]} columns, "
                f"W_g has {self.W_g.shape[1]}"
            )
        if min(self.W_f.shape + self.W_g.shape) < 1:
            raise ConfigurationError("projection dimensions must be positive")
        if not (np.isfinite(self.W_f).all() and np.isfinite(self.W_g).all()):
            raise ConfigurationError("projection matrices contain non-finite entries")

    @property
    def dim(self) -> int:
        return self.W_f.shape[1]

    @property
    def d_img(self) -> int:
        return self.W_f.shape[0]

    @property
    def d_cap(self) -> int:
        return self.W_g.shape[0]

    @classmethod
    def initialize(cls, d_img, d_cap, dim, seed=0, **flags) -> "ProjectionModel":
        """Uniform init in [-1/sqrt(d_in), 1/sqrt(d_in)] per matrix."""
        for name, v in (("d_img", d_img), ("d_cap", d_cap), ("dim", dim)):
            if int(v) < 1:
                raise ConfigurationError(f"{name} must be positive, got {v}")
        rng = np.random.default_rng(seed)
        bf = 1.0 / np.sqrt(d_img)
        bg = 1.0 / np.sqrt(d_cap)
        W_f = rng.uniform(-bf, bf, size=(d_img, dim))
        W_g = rng.uniform(-bg, bg, size=(d_cap, dim))
        return cls(W_f, W_g, **flags)

    def copy(self) -> "ProjectionModel":
        return replace(self, W_f=self.W_f.copy(), W_g=self.W_g.copy())

    def params(self) -> dict:
        return {"W_f": self.W_f, "W_g": self.W_g}


def _check_features(x, expected, side):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ConfigurationError(f"{side} features must be 2-D, got shape {x.shape}")
    if x.shape[1] != expected:
        raise ConfigurationError(
            f"{side} feature dimension {x.shape[1]} does not match projection rows {expected}"
        )
    if x.shape[0] == 0:
        raise EmptyBatchError(f"no {side} features given")
    return x


def _finish(raw, normalize, use_abs, side):
    if normalize:
        norms = np.linalg.norm(raw, axis=1)
        if np.any(norms == 0):
            raise DegenerateInputError(f"zero-norm {side} embedding cannot be normalized")
        out = raw / norms[:, None]
    else:
        out = raw
    if use_abs:
        out = np.abs(out)
    return out


def embed_images(model: ProjectionModel, phi) -> np.ndarray:
    """Embed a batch of image features (rows)."""
    phi = _check_features(phi, model.d_img, "image")
    return _finish(phi @ model.W_f, model.normalize_image, model.abs_before_similarity, "image")


def embed_captions(model: ProjectionModel, psi) -> np.ndarray:
    psi = _check_features(psi, model.d_cap, "caption")
    return _finish(psi @ model.W_g, model.normalize_caption, model.abs_before_similarity, "caption")


def embed_image(model: ProjectionModel, phi) -> np.ndarray:
    return embed_images(model, np.atleast_2d(phi))[0]


def embed_caption(model: ProjectionModel, psi) -> np.ndarray:
    return embed_captions(model, np.atleast_2d(psi))[0]


def similarity(kind, f, g) -> float:
    """Score one image embedding against one caption embedding."""
    kind = SimilarityKind.parse(kind)
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise ConfigurationError(f"embedding shapes differ: {f.shape} vs {g.shape}")
    if kind is SimilarityKind.INNER_PRODUCT:
        return float(f @ g)
    gap = np.maximum(g - f, 0.0)
    return float(-(gap @ gap))


def similarity_matrix(kind, image_embeddings, caption_embeddings) -> np.ndarray:
    """Scores for all (image, caption) pairs; rows are images."""
    kind = SimilarityKind.parse(kind)
    f = np.asarray(image_embeddings, dtype=np.float64)
    g = np.asarray(caption_embeddings, dtype=np.float64)
    if f.size == 0 or g.size == 0:
        raise EmptyBatchError("similarity_matrix needs at least one image and one caption")
    f = np.atleast_2d(f)
    g = np.atleast_2d(g)
    if f.shape[1] != g.shape[1]:
        raise ConfigurationError(f"embedding dimensions differ: {f.shape[1]} vs {g.shape[1]}")
    if kind is SimilarityKind.INNER_PRODUCT:
        return f @ g.T
    return kernels.order_similarity(f, g)


def similarity_matrix_backward(kind, f, g, grad_s):
    """Pull a gradient on the score matrix back onto both embedding sets."""
    kind = SimilarityKind.parse(kind)
    if kind is SimilarityKind.INNER_PRODUCT:
        return grad_s @ g, grad_s.T @ f
    return kernels.order_similarity_backward(f, g, grad_s)


def embedding_backward(raw, grad_out, normalize, use_abs):
    """Chain a gradient on emitted embeddings back to the raw projections."""
    if normalize:
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        unit = raw / norms
    else:
        unit = raw
    if use_abs:
        grad_out = grad_out * np.sign(unit)
    if not normalize:
        return grad_out
    radial = np.sum(grad_out * unit, axis=1, keepdims=True)
    return (grad_out - radial * unit) / norms
