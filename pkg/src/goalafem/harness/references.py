"""Reference goal values for the benchmarks whose exact goal is not known in closed form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..marking import MarkingConfig, adaptive_loop

__all__ = ["Reference", "REFERENCES", "reference_for", "compute_reference"]


@dataclass(frozen=True)
class Reference:
    value: float
    source: str


# Regenerate with ``goalafem reference exp1``; the source string records how.
REFERENCES = {
    "exp1": Reference(
        -1.5850908139009775e-3,
        "strategy C, theta 0.5, p 3, long-double assembly, to 84434 elements; "
        "mean goal value of the last 4 levels",
    ),
}


def reference_for(problem_id):
    """Cached reference value, or ``None`` when none is stored."""
    ref = REFERENCES.get(problem_id)
    return None if ref is None else ref.value


def compute_reference(problem, strategy="C", theta=0.5, max_elements=80_000, last=4):
    """Mean goal value over the ``last`` levels of a fine adaptive run.

    Returns ``(value, spread, N_final)`` where ``spread`` is the range of the
    averaged goal values, a rough accuracy indicator.
    """
    hist = adaptive_loop(problem, MarkingConfig(theta, strategy), max_elements=max_elements)
    if len(hist) < last:
        raise InputError(f"run produced {len(hist)} levels, fewer than {last}")
    g = hist.column("goal")[-last:]
    return float(np.mean(g)), float(np.ptp(g)), int(hist.N[-1])
