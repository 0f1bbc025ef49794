"""Piecewise-linear (hat function) spline spaces on [0, 2R]."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SplineSpace:
    R: float
    D: int

    def __post_init__(self):
        if self.D < 2:
            raise ValueError(f"need D >= 2, got {self.D}")
        if not self.R > 0:
            raise ValueError(f"need R > 0, got {self.R}")

    @property
    def upper(self) -> float:
        return 2.0 * self.R

    @property
    def h(self) -> float:
        return self.upper / (self.D - 1)

    @property
    def knots(self) -> np.ndarray:
        return np.linspace(0.0, self.upper, self.D)

    def locate(self, r):
        """Left cell index, fractional position and in-domain mask for ``r``.

        The hat functions that can be nonzero at r are ``idx`` (weight
        ``1 - frac``) and ``idx + 1`` (weight ``frac``).
        """
        r = np.asarray(r, dtype=float)
        inside = (r >= 0.0) & (r <= self.upper)
        x = np.where(inside, r, 0.0) / self.h
        # knots computed by linspace can land an ulp off the integer grid
        near = np.rint(x)
        x = np.where(np.abs(x - near) <= 8 * np.finfo(float).eps * np.maximum(near, 1.0), near, x)
        idx = np.clip(np.floor(x).astype(np.int64), 0, self.D - 2)
        frac = x - idx
        return idx, frac, inside

    def basis_matrix(self, r) -> np.ndarray:
        """Dense matrix of hat function values, shape r.shape + (D,)."""
        r = np.asarray(r, dtype=float)
        idx, frac, inside = self.locate(r)
        out = np.zeros(r.shape + (self.D,))
        lo = np.where(inside, 1.0 - frac, 0.0)
        hi = np.where(inside, frac, 0.0)
        np.put_along_axis(out, idx[..., None], lo[..., None], axis=-1)
        np.put_along_axis(out, idx[..., None] + 1, hi[..., None], axis=-1)
        return out


@dataclass(frozen=True)
class SplineModel:
    space: SplineSpace
    coeffs: np.ndarray
    constraint_M: float
    kernel_name: str | None = None

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.space.D,):
            raise ValueError(f"expected {self.space.D} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, r):
        return evaluate(self, r)

    def to_json(self) -> dict:
        out = dict(R=self.space.R, D=self.space.D, coeffs=self.coeffs.tolist(),
                   M=self.constraint_M)
        if self.kernel_name is not None:
            out["kernel_name"] = self.kernel_name
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "SplineModel":
        return cls(SplineSpace(float(doc["R"]), int(doc["D"])),
                   np.asarray(doc["coeffs"], dtype=float), float(doc["M"]),
                   doc.get("kernel_name"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SplineModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def evaluate(model: SplineModel, r):
    """sum_l coeffs[l] * phi_l(r); zero outside [0, 2R]."""
    r = np.asarray(r, dtype=float)
    idx, frac, inside = model.space.locate(r)
    c = model.coeffs
    val = c[idx] * (1.0 - frac) + c[idx + 1] * frac
    return np.where(inside, val, 0.0)


def difference_matrix(space_or_D) -> np.ndarray:
    D = space_or_D.D if isinstance(space_or_D, SplineSpace) else int(space_or_D)
    out = np.eye(D) - np.eye(D, k=1)
    out[-1, -1] = 0.0
    return out


def constraint_value(model_or_coeffs) -> float:
    """2 max|a_l| + max|a_l - a_{l+1}|, the discrete stand-in for |a|_inf + |a'|_inf."""
    c = getattr(model_or_coeffs, "coeffs", model_or_coeffs)
    c = np.asarray(c, dtype=float)
    step = np.max(np.abs(np.diff(c))) if c.size > 1 else 0.0
    return float(2.0 * np.max(np.abs(c)) + step)


def interpolate(kernel, space: SplineSpace) -> SplineModel:
    """Nodal interpolant of ``kernel`` on the knots of ``space``."""
    coeffs = np.asarray(kernel(space.knots), dtype=float)
    return SplineModel(space, coeffs, constraint_value(coeffs),
                       getattr(kernel, "name", None))
