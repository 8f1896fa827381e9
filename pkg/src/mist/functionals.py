"""Scalar functionals ``g`` that turn a density ratio into an information measure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError

KINDS = ("shannon", "renyi")


@dataclass(frozen=True)
class Functional:
    """``g(u) = ln u`` (Shannon) or ``g(u) = u**alpha`` (Renyi-alpha integral).

    Integrating ``g`` of the ratio ``p'/p`` against ``p`` gives ``-KL(p||p')``
    for Shannon, so a pairwise Shannon estimate is the negative mutual
    information.  See :meth:`information`.
    """

    kind: str = "shannon"
    alpha: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown functional {self.kind!r}; expected one of {KINDS}")
        if self.kind == "renyi":
            if self.alpha is None:
                raise ValidationError("renyi functional requires alpha")
            if not 0.0 <= float(self.alpha) <= 1.0:
                raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
            object.__setattr__(self, "alpha", float(self.alpha))
        elif self.alpha is not None:
            raise ValidationError("alpha is only meaningful for the renyi functional")

    def __call__(self, u):
        return g_eval(self, u)

    @property
    def null_value(self) -> float:
        return null_value(self)

    @property
    def strictly_concave(self) -> bool:
        """True when ``G <= g(1)`` with equality only if ``p' = p``."""
        return self.kind == "shannon" or 0.0 < self.alpha < 1.0

    def information(self, estimate: float) -> float:
        """Conventional information value: MI ``= -G`` for Shannon, ``G`` for Renyi."""
        return -estimate if self.kind == "shannon" else estimate

    def label(self) -> str:
        return "shannon" if self.kind == "shannon" else f"renyi(alpha={self.alpha:g})"


SHANNON = Functional("shannon")


def renyi(alpha: float) -> Functional:
    return Functional("renyi", alpha)


def g_eval(f: Functional, u):
    """Evaluate ``g`` elementwise; ``u`` must be strictly positive."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise ValidationError("g is only defined for positive arguments")
    if f.kind == "shannon":
        out = np.log(arr)
    elif f.alpha == 0.0:
        out = np.ones_like(arr)
    else:
        out = arr ** f.alpha
    return float(out) if out.ndim == 0 else out


def null_value(f: Functional) -> float:
    """``g(1)``: the value of the functional when ``p' = p``."""
    return 0.0 if f.kind == "shannon" else 1.0
