"""Finite-difference oracle for the reverse-mode engine.

Central differences against the recorded backward pass. Callers should build
the function under ``precision(np.float64)``; float32 storage makes the
difference quotient too noisy for the tolerances used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    passed: bool
    tol: float
    max_rel_err: float
    worst_input: int = 0
    worst_index: tuple = ()
    worst_analytic: float = 0.0
    worst_numeric: float = 0.0
    n_elements: int = 0
    per_input_max: list = field(default_factory=list)

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict} max_rel_err={self.max_rel_err:.3e} (tol {self.tol:.1e}) "
                f"worst input {self.worst_input} index {self.worst_index}: "
                f"analytic {self.worst_analytic:.6e} vs central-diff {self.worst_numeric:.6e}")


def grad_check(f, xs, h: float = 1e-4, tol: float = 1e-4) -> GradCheckReport:
    """Compare backward() gradients of scalar-valued ``f`` against central differences.

    ``xs`` is a Tensor or sequence of Tensors; ``f(*xs)`` must return a scalar
    Tensor. The tensors are perturbed in place element by element and restored,
    so passing a model's own parameters works. Relative error per element is
    |g_ad - g_fd| / (|g_ad| + |g_fd| + 1e-8); the report carries the worst one.
    """
    if isinstance(xs, Tensor):
        xs = [xs]
    xs = list(xs)

    for x in xs:
        x.zero_grad()
    loss = f(*xs)
    backward(loss)
    analytic = []
    for x in xs:
        g = x.grad if x.grad is not None else np.zeros_like(x.data)
        analytic.append(np.array(g, dtype=np.float64))
        x.zero_grad()

    report = GradCheckReport(passed=True, tol=tol, max_rel_err=0.0,
                             n_elements=sum(x.data.size for x in xs),
                             per_input_max=[0.0] * len(xs))
    with no_grad():
        for xi, x in enumerate(xs):
            flat = x.data.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                f_plus = f(*xs).item()
                flat[j] = orig - h
                f_minus = f(*xs).item()
                flat[j] = orig
                g_fd = (f_plus - f_minus) / (2.0 * h)
                g_ad = float(analytic[xi].reshape(-1)[j])
                rel = abs(g_ad - g_fd) / (abs(g_ad) + abs(g_fd) + 1e-8)
                report.per_input_max[xi] = max(report.per_input_max[xi], rel)
                if rel > report.max_rel_err:
                    report.max_rel_err = rel
                    report.worst_input = xi
                    report.worst_index = tuple(np.unravel_index(j, x.data.shape))
                    report.worst_analytic = g_ad
                    report.worst_numeric = g_fd
    report.passed = report.max_rel_err <= tol
    return report
