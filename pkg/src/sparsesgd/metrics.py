"""Per-checkpoint run metrics shared by the sequential and parallel runners."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunMetrics:
    """Checkpoint rows (parallel arrays) plus a summary mapping.

    subopt and ms hold NaN when unknown (no stored optimum / timing off);
    the CSV writer renders NaN as an empty field. g2 records the empirical
    E_i ||grad f_i(x_t)||^2 at each checkpoint, g2_initial the same at x_0;
    their max is the trajectory plug-in for the memory-bound check.
    """

    label: str
    iters: np.ndarray
    objective: np.ndarray
    subopt: np.ndarray
    mem_sq_norm: np.ndarray
    bits_cum: np.ndarray
    ms: np.ndarray
    g2: np.ndarray
    g2_initial: float
    summary: dict = field(default_factory=dict)
    replay: object | None = None

    @property
    def g2_max(self) -> float:
        vals = [self.g2_initial] + list(self.g2)
        return float(max(vals))

    def rows(self):
        """Yield CSV-ready tuples in the stable column order."""
        for i in range(len(self.iters)):
            yield (self.label, int(self.iters[i]), float(self.objective[i]),
                   float(self.subopt[i]), float(self.mem_sq_norm[i]),
                   float(self.bits_cum[i]), float(self.ms[i]))
