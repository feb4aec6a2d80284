"""Temporal summarization of per-frame attributes.

A video is reduced to a 58-dim participant vector: per-column mean and
population standard deviation of the 22-dim frame vectors, per-AU activation
fractions at a threshold, and the fractions of strictly positive arousal and
valence frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_AU = 12
N_EXPR = 8
FRAME_DIM = N_AU + N_EXPR + 2
FEATURE_DIM = 2 * FRAME_DIM + N_AU + 2
DEFAULT_TAU = 0.5

# Columns of the 22-dim frame vector.
AU_COLS = slice(0, N_AU)
EXPR_COLS = slice(N_AU, N_AU + N_EXPR)
AROUSAL_COL = N_AU + N_EXPR
VALENCE_COL = N_AU + N_EXPR + 1

# Indices of the 58-dim vector owned by each attribute.  Mean and std slices
# follow the frame layout; activations cover the AU block only.  The four
# groups partition all 58 dims (36 + 16 + 3 + 3).
ATTRIBUTE_DIMS = {
    "au": tuple(range(0, 12)) + tuple(range(22, 34)) + tuple(range(44, 56)),
    "expr": tuple(range(12, 20)) + tuple(range(34, 42)),
    "arousal": (20, 42, 56),
    "valence": (21, 43, 57),
}


class AttributeRangeError(ValueError):
    """A frame attribute lies outside its documented range."""


@dataclass(frozen=True)
class FrameAttributes:
    """Squashed per-frame outputs: AU and expression probabilities plus
    arousal/valence scalars in [-1, 1]."""

    au: tuple
    expr: tuple
    arousal: float
    valence: float

    def __post_init__(self):
        au = tuple(float(v) for v in self.au)
        expr = tuple(float(v) for v in self.expr)
        object.__setattr__(self, "au", au)
        object.__setattr__(self, "expr", expr)
        object.__setattr__(self, "arousal", float(self.arousal))
        object.__setattr__(self, "valence", float(self.valence))
        if len(au) != N_AU:
            raise AttributeRangeError(f"expected {N_AU} AU values, got {len(au)}")
        if len(expr) != N_EXPR:
            raise AttributeRangeError(f"expected {N_EXPR} expression values, got {len(expr)}")
        if any(not 0.0 <= v <= 1.0 for v in au):
            raise AttributeRangeError("AU probabilities must lie in [0, 1]")
        if any(not 0.0 <= v <= 1.0 for v in expr):
            raise AttributeRangeError("expression probabilities must lie in [0, 1]")
        if abs(sum(expr) - 1.0) > 1e-9:
            raise AttributeRangeError("expression probabilities must sum to 1")
        for label, v in (("arousal", self.arousal), ("valence", self.valence)):
            if not -1.0 <= v <= 1.0:
                raise AttributeRangeError(f"{label} must lie in [-1, 1], got {v}")


def frame_vector(attrs: FrameAttributes) -> np.ndarray:
    """Concatenate one frame's attributes as AU(12) | expr(8) | arousal | valence."""
    return np.concatenate([
        np.asarray(attrs.au, dtype=float),
        np.asarray(attrs.expr, dtype=float),
        [attrs.arousal, attrs.valence],
    ])


def attribute_matrix(frames) -> np.ndarray:
    """Stack FrameAttributes (or ready-made 22-dim rows) into an M x 22 matrix."""
    rows = [frame_vector(f) if isinstance(f, FrameAttributes) else np.asarray(f, dtype=float) for f in frames]
    if not rows:
        raise ValueError("attribute matrix needs at least one frame")
    mat = np.vstack(rows)
    if mat.shape[1] != FRAME_DIM:
        raise ValueError(f"frame vectors must have {FRAME_DIM} columns, got {mat.shape[1]}")
    return mat


def _check_matrix(F: np.ndarray) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[1] != FRAME_DIM:
        raise ValueError(f"expected an M x {FRAME_DIM} matrix, got shape {F.shape}")
    if F.shape[0] < 1:
        raise ValueError("attribute matrix is empty")
    return F


def mean_std(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population standard deviation (divide by M)."""
    F = _check_matrix(F)
    # Shift by the first row so constant columns come out exactly zero.
    sigma = (F - F[0]).std(axis=0)
    return F.mean(axis=0), sigma


def au_activation(F: np.ndarray, tau: float = DEFAULT_TAU) -> np.ndarray:
    """Fraction of frames per AU with probability strictly greater than tau."""
    F = _check_matrix(F)
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    return (F[:, AU_COLS] > tau).mean(axis=0)


def positive_fractions(F: np.ndarray) -> tuple[float, float]:
    """Fractions of frames with strictly positive arousal and valence."""
    F = _check_matrix(F)
    p_aro = float((F[:, AROUSAL_COL] > 0.0).mean())
    p_val = float((F[:, VALENCE_COL] > 0.0).mean())
    return p_aro, p_val


@dataclass(frozen=True)
class TemporalFeatures:
    mean: np.ndarray
    std: np.ndarray
    activation: np.ndarray
    p_arousal: float
    p_valence: float

    def vector(self) -> np.ndarray:
        """58-dim concatenation m | sigma | a | p_aro | p_val."""
        return np.concatenate([
            self.mean, self.std, self.activation, [self.p_arousal, self.p_valence],
        ])


def temporal_feature_vector(F: np.ndarray, tau: float = DEFAULT_TAU) -> TemporalFeatures:
    F = _check_matrix(F)
    m, sigma = mean_std(F)
    a = au_activation(F, tau)
    p_aro, p_val = positive_fractions(F)
    return TemporalFeatures(mean=m, std=sigma, activation=a, p_arousal=p_aro, p_valence=p_val)


def feature_names() -> list[str]:
    """Column names for the 58-dim participant vector, in vector order."""
    frame = [f"au_{i + 1:02d}" for i in range(N_AU)]
    frame += [f"expr_{i + 1:02d}" for i in range(N_EXPR)]
    frame += ["arousal", "valence"]
    names = [f"mean_{n}" for n in frame]
    names += [f"std_{n}" for n in frame]
    names += [f"act_au_{i + 1:02d}" for i in range(N_AU)]
    names += ["p_arousal", "p_valence"]
    return names
