"""Central-difference gradient checking against the tape's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class ParamCheck:
    name: str
    shape: tuple[int, ...]
    max_rel_error: float
    worst_index: tuple[int, ...]
    passed: bool


@dataclass
class GradCheckReport:
    tol: float
    step: float
    checks: list[ParamCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            shape = "x".join(str(n) for n in c.shape) or "scalar"
            out.append(f"{status}\t{c.name}\t{shape}\t{c.max_rel_error:.3e}")
        return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))


def _loss_value(f: Callable[[], Tensor]) -> float:
    value = float(f().data)
    if not np.isfinite(value):
        raise FloatingPointError(f"grad_check: non-finite loss {value}")
    return value


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    tol: float = 1e-4,
    grad_hooks: Mapping[str, Callable[[np.ndarray], np.ndarray]] | None = None,
) -> GradCheckReport:
    """Compare backward() gradients with central differences for every element.

    ``f`` must rebuild the loss from the current parameter values on every call
    and be deterministic. ``grad_hooks`` rewrites the analytic gradient of the
    named parameters before comparison; it exists so tests can plant a faulty
    gradient and confirm the report catches it.
    """
    for p in params.values():
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise FloatingPointError("grad_check: non-finite loss")
    loss.backward()
    report = GradCheckReport(tol=tol, step=step)
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if grad_hooks and name in grad_hooks:
            analytic = grad_hooks[name](analytic)
        numeric = np.zeros_like(p.data)
        for idx in np.ndindex(p.shape):
            orig = p.data[idx]
            p.data[idx] = orig + step
            up = _loss_value(f)
            p.data[idx] = orig - step
            down = _loss_value(f)
            p.data[idx] = orig
            numeric[idx] = (up - down) / (2.0 * step)
        err = relative_error(analytic, numeric)
        worst = np.unravel_index(int(np.argmax(err)), err.shape) if err.size else ()
        max_err = float(err.max()) if err.size else 0.0
        report.checks.append(
            ParamCheck(name, p.shape, max_err, tuple(int(i) for i in worst), max_err < tol)
        )
        p.zero_grad()
    return report
