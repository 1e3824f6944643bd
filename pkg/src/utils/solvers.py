"""Safeguarded one-dimensional Newton maximization.

The solver works on many independent scalar problems at once. Each element
keeps its own bracket, its own Newton/bisection decision and freezes once
converged, so element results do not depend on which other problems share
the call.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

logger = logging.getLogger(__name__)

GradientFunction = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class SolverResult:
    """Outcome of a vectorised maximization."""
    x: np.ndarray
    gradient: np.ndarray
    information: np.ndarray
    converged: np.ndarray
    diverged: np.ndarray
    iterations: int


def _evaluate(fun: GradientFunction, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    with np.errstate(all='ignore'):
        g, h = fun(x)
    return np.asarray(g, dtype=float), np.asarray(h, dtype=float)


def maximize(fun: GradientFunction, x0, *, grad_tol: float, max_iter: int,
             bound: float, step: float = 1.0, polish: bool = True) -> SolverResult:
    """Find interior maxima of independent concave-near-optimum problems.

    ``fun(x)`` returns the gradient and the information (minus the
    derivative of the gradient) elementwise. Newton steps are taken while
    they land inside the current bracket and the information is positive;
    otherwise the bracket is bisected. An element whose bracket cannot be
    closed before ``|x|`` exceeds ``bound`` is flagged as diverged.
    """
    x = np.array(x0, dtype=float, copy=True).reshape(-1)
    g, h = _evaluate(fun, x)
    converged = np.abs(g) <= grad_tol
    diverged = ~np.isfinite(g)

    # lo keeps g > 0 (maximum to its right), hi keeps g < 0
    lo = np.where(g > 0, x, x - step)
    hi = np.where(g < 0, x, x + step)
    width = np.full(x.shape, float(step))

    need_lo = ~converged & ~diverged & ~(g > 0)
    while need_lo.any():
        g_lo, _ = _evaluate(fun, lo)
        found = g_lo >= 0
        moving = need_lo & ~found
        hi = np.where(moving, np.minimum(hi, lo), hi)
        width = np.where(moving, 2.0 * width, width)
        lo = np.where(moving, lo - width, lo)
        diverged |= moving & (lo < -bound)
        need_lo = moving & ~diverged

    width = np.full(x.shape, float(step))
    need_hi = ~converged & ~diverged & ~(g < 0)
    while need_hi.any():
        g_hi, _ = _evaluate(fun, hi)
        found = g_hi <= 0
        moving = need_hi & ~found
        lo = np.where(moving, np.maximum(lo, hi), lo)
        width = np.where(moving, 2.0 * width, width)
        hi = np.where(moving, hi + width, hi)
        diverged |= moving & (hi > bound)
        need_hi = moving & ~diverged

    iterations = 0
    active = ~converged & ~diverged
    while active.any() and iterations < max_iter:
        iterations += 1
        with np.errstate(all='ignore'):
            newton = x + g / h
        use_newton = active & (h > 0) & np.isfinite(newton) & (newton >= lo) & (newton <= hi)
        trial = np.where(use_newton, newton, 0.5 * (lo + hi))
        trial = np.where(active, trial, x)

        g_new, h_new = _evaluate(fun, trial)
        x = np.where(active, trial, x)
        g = np.where(active, g_new, g)
        h = np.where(active, h_new, h)
        lo = np.where(active & (g_new > 0), trial, lo)
        hi = np.where(active & (g_new < 0), trial, hi)

        converged |= active & (np.abs(g_new) <= grad_tol)
        active = ~converged & ~diverged

    if polish and converged.any():
        with np.errstate(all='ignore'):
            newton = x + g / h
        ok = converged & (h > 0) & np.isfinite(newton) & (newton >= lo) & (newton <= hi)
        if ok.any():
            g_new, h_new = _evaluate(fun, np.where(ok, newton, x))
            better = ok & (np.abs(g_new) <= np.abs(g))
            x = np.where(better, newton, x)
            g = np.where(better, g_new, g)
            h = np.where(better, h_new, h)

    if active.any():
        logger.debug(f"{int(active.sum())} problem(s) unconverged after {iterations} iterations")

    return SolverResult(x=x, gradient=g, information=h, converged=converged,
                        diverged=diverged, iterations=iterations)
