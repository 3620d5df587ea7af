"""Runtime action filtering: Nagumo-style margin check and the minimum-norm
halfspace projection that restores it, plus an exhaustive grid oracle used to
verify the closed form.

The enforced constraint is grad . u >= -alpha * h: on the boundary (h = 0) it
reduces to "the velocity must not point out of the set", and for h > 0 it
allows a controlled approach toward the boundary at rate alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import InvalidInputError


class InfeasibleGridError(RuntimeError):
    """Raised when the verification grid contains no feasible point."""


@dataclass
class RecoveryParams:
    alpha: float = 1.0
    grad_eps: float = 1e-6
    fallback: str = "hold"  # "hold" | "retreat"

    def __post_init__(self):
        if self.alpha <= 0 or self.grad_eps <= 0:
            raise InvalidInputError("alpha and grad_eps must be positive")
        if self.fallback not in ("hold", "retreat"):
            raise InvalidInputError(f"unknown fallback {self.fallback!r}")


@dataclass
class FilterDecision:
    u_out: np.ndarray
    modified: bool
    constraint_slack: float
    fallback_used: bool = False


def nagumo_ok(h: float, grad, u, alpha: float) -> bool:
    grad = np.asarray(grad, dtype=float)
    u = np.asarray(u, dtype=float)
    return bool(float(grad @ u) >= -alpha * h)


def recover(u_pi, h: float, grad, params: RecoveryParams,
            retreat_target=None) -> FilterDecision:
    """Minimum-norm correction of u_pi onto the halfspace grad.u >= -alpha*h.

    With a usable gradient the unique projection lands exactly on the
    constraint plane. A degenerate gradient triggers the configured fallback:
    zero action, or unit-speed motion toward `retreat_target` (a 3-vector
    position offset direction provider supplied by the caller).
    """
    u_pi = np.asarray(u_pi, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if not (np.all(np.isfinite(u_pi)) and np.all(np.isfinite(grad)) and np.isfinite(h)):
        raise InvalidInputError("recover received non-finite input")

    dot = float(grad @ u_pi)
    if dot >= -params.alpha * h:
        return FilterDecision(u_pi.copy(), False, dot + params.alpha * h)

    gnorm = float(np.linalg.norm(grad))
    if gnorm >= params.grad_eps:
        u = u_pi + ((-params.alpha * h - dot) / (gnorm * gnorm)) * grad
        return FilterDecision(u, True, float(grad @ u) + params.alpha * h)

    if params.fallback == "retreat" and retreat_target is not None:
        direction = np.asarray(retreat_target, dtype=float)
        n = np.linalg.norm(direction)
        u = np.zeros_like(u_pi)
        if n > 1e-12:
            u[:3] = direction / n
        return FilterDecision(u, True, float(grad @ u) + params.alpha * h, fallback_used=True)
    return FilterDecision(np.zeros_like(u_pi), True, params.alpha * h, fallback_used=True)


def qp_oracle(u_pi, h: float, grad, alpha: float, grid_radius: float,
              grid_step: float) -> np.ndarray:
    """Exhaustive minimum-distance search over a planar grid around u_pi.

    The search plane is spanned by the gradient direction and the component of
    u_pi orthogonal to it, which contains the true projection; restricting to
    it keeps the grid tractable in 6-D.
    """
    if grid_step <= 0:
        raise InvalidInputError("grid_step must be positive")
    u_pi = np.asarray(u_pi, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if nagumo_ok(h, grad, u_pi, alpha):
        return u_pi.copy()

    gnorm = np.linalg.norm(grad)
    if gnorm < 1e-12:
        raise InfeasibleGridError("zero gradient: constraint cannot be restored")
    e1 = grad / gnorm
    residual = u_pi - (u_pi @ e1) * e1
    rnorm = np.linalg.norm(residual)
    if rnorm > 1e-12:
        e2 = residual / rnorm
    else:
        e2 = np.zeros_like(e1)
        e2[int(np.argmin(np.abs(e1)))] = 1.0
        e2 -= (e2 @ e1) * e1
        e2 /= np.linalg.norm(e2)

    offsets = np.arange(-grid_radius, grid_radius + 0.5 * grid_step, grid_step)
    best = None
    best_cost = np.inf
    for a in offsets:
        for b in offsets:
            u = u_pi + a * e1 + b * e2
            if float(grad @ u) + alpha * h >= 0.0:
                cost = a * a + b * b
                if cost < best_cost:
                    best_cost = cost
                    best = u
    if best is None:
        raise InfeasibleGridError("no feasible point on the search grid")
    return best
