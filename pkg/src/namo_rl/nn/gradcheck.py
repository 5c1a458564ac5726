"""Reverse-mode vs central finite-difference comparison."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .tensor import Tensor, record_kinks


@dataclass
class GradCheckReport:
    probes: List[Tuple[str, int, float, float, float]] = field(default_factory=list)  # name, flat idx, analytic, numeric, rel
    skipped_kinks: int = 0
    tolerance: float = 1e-4

    @property
    def max_rel_error(self) -> float:
        return max((p[4] for p in self.probes), default=0.0)

    @property
    def failures(self):
        return [p for p in self.probes if p[4] >= self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.failures


def rel_error(a: float, n: float, floor: float = 1e-6) -> float:
    """|a - n| scaled by the larger magnitude, floored so exact zeros compare absolutely."""
    return abs(a - n) / max(abs(a), abs(n), floor)


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], n_probes: int = 200, h: float = 1e-5,
               tolerance: float = 1e-4, rng: np.random.Generator | None = None,
               names: Sequence[str] | None = None, max_tries: int = 20,
               weighting: str = "tensor") -> GradCheckReport:
    """Probe random parameter entries of a scalar function (run in float64).

    A probe is redrawn when some piecewise op (relu, clip, min) takes a
    different branch at +h than at -h, since the derivative is undefined
    across the kink.
    """
    rng = rng or np.random.default_rng(0)
    names = list(names) if names is not None else [p.name or f"p{i}" for i, p in enumerate(params)]
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError("grad_check needs float64 parameters")
        p.grad = None
    out = fn()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    # "tensor": every parameter tensor equally likely (covers small ones); "size": every scalar equally likely
    sizes = np.array([p.data.size if weighting == "size" else 1 for p in params], dtype=float)
    report = GradCheckReport(tolerance=tolerance)
    while len(report.probes) < n_probes:
        for _ in range(max_tries):
            k = int(rng.choice(len(params), p=sizes / sizes.sum()))
            idx = int(rng.integers(params[k].data.size))
            data = params[k].data
            pos = np.unravel_index(idx, data.shape)
            orig = data[pos]
            data[pos] = orig + h
            with record_kinks() as kp:
                fp = float(fn().data)
            data[pos] = orig - h
            with record_kinks() as km:
                fm = float(fn().data)
            data[pos] = orig
            if len(kp) == len(km) and all(np.array_equal(a, b) for a, b in zip(kp, km)):
                break
            report.skipped_kinks += 1
        else:
            raise RuntimeError("could not find a kink-free probe")
        num = (fp - fm) / (2 * h)
        ana = float(analytic[k][np.unravel_index(idx, analytic[k].shape)])
        report.probes.append((names[k], idx, ana, num, rel_error(ana, num)))
    return report
