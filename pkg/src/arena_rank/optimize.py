"""Quasi-Newton minimization with a strong-Wolfe line search.

Dense BFGS keeps the full inverse-Hessian approximation; for large problems
the limited-memory two-loop recursion is used instead. An optional
projection is applied to every accepted iterate, which lets the caller fix
directions along which the objective is exactly invariant.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

log = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
FunGrad = Callable[[Array], tuple[float, Array]]

MAX_BACKTRACKS = 50


class LineSearchError(RuntimeError):
    pass


@dataclass
class OptimizeResult:
    x: Array
    fun: float
    grad: Array
    iterations: int
    converged: bool
    stop_reason: str
    evaluations: int


class _Counter:
    def __init__(self, fg: FunGrad):
        self.fg = fg
        self.calls = 0

    def __call__(self, x: Array) -> tuple[float, Array]:
        self.calls += 1
        f, g = self.fg(x)
        return float(f), g


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating two points and slopes, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - da * db
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def wolfe_search(fg, x, f0, g0, p, alpha0=1.0, c1=1e-4, c2=0.9, max_evals=MAX_BACKTRACKS):
    """Find a step satisfying the strong Wolfe conditions along ``p``.

    Non-finite objective values are treated as overshooting and the step is
    halved. Returns ``(alpha, f, g)``; if the Wolfe conditions cannot be met
    within ``max_evals`` evaluations the best point with sufficient decrease
    is returned, and :class:`LineSearchError` is raised when there is none.
    """
    d0 = float(g0 @ p)
    if not d0 < 0:
        raise LineSearchError("search direction is not a descent direction")

    best = None  # (f, alpha, g) with sufficient decrease

    def note(alpha, f, g):
        nonlocal best
        if math.isfinite(f) and f <= f0 + c1 * alpha * d0 and f < f0:
            if best is None or f < best[0]:
                best = (f, alpha, g)

    evals = 0

    def zoom(lo, f_lo, d_lo, g_lo, hi, f_hi, d_hi):
        nonlocal evals
        while evals < max_evals:
            a = None
            if math.isfinite(f_hi) and d_hi is not None:
                a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            left, right = min(lo, hi), max(lo, hi)
            margin = 0.1 * (right - left)
            if a is None or not (left + margin <= a <= right - margin):
                a = 0.5 * (lo + hi)
            f, g = fg(x + a * p)
            evals += 1
            note(a, f, g)
            if not math.isfinite(f):
                hi, f_hi, d_hi = a, f, None
                continue
            d = float(g @ p)
            if f > f0 + c1 * a * d0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo, g_lo = a, f, d, g
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        return None

    a_prev, f_prev, d_prev, g_prev = 0.0, f0, d0, g0
    a = alpha0
    first = True
    while evals < max_evals:
        f, g = fg(x + a * p)
        evals += 1
        note(a, f, g)
        if not math.isfinite(f):
            a = a_prev + 0.5 * (a - a_prev)
            continue
        d = float(g @ p)
        if f > f0 + c1 * a * d0 or (not first and f >= f_prev):
            found = zoom(a_prev, f_prev, d_prev, g_prev, a, f, d)
            break
        if abs(d) <= -c2 * d0:
            return a, f, g
        if d >= 0:
            found = zoom(a, f, d, g, a_prev, f_prev, d_prev)
            break
        a_prev, f_prev, d_prev, g_prev = a, f, d, g
        a = 2.0 * a
        first = False
    else:
        found = None

    if found is not None:
        return found
    if best is not None:
        return best[1], best[0], best[2]
    raise LineSearchError(f"no decrease found after {evals} evaluations")


class _DenseInverse:
    def __init__(self, n: int):
        self.H = np.eye(n)
        self.scaled = False

    def direction(self, g: Array) -> Array:
        return -(self.H @ g)

    def update(self, s: Array, y: Array) -> None:
        sy = float(s @ y)
        if not sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            return
        if not self.scaled:
            self.H *= sy / float(y @ y)
            self.scaled = True
        rho = 1.0 / sy
        Hy = self.H @ y
        yHy = float(y @ Hy)
        self.H += (rho * rho * yHy + rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))

    def reset(self) -> None:
        self.H = np.eye(self.H.shape[0])
        self.scaled = False


class _LimitedInverse:
    def __init__(self, memory: int):
        self.pairs: deque[tuple[Array, Array, float]] = deque(maxlen=memory)

    def direction(self, g: Array) -> Array:
        q = g.copy()
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * float(s @ q)
            q -= a * y
            alphas.append(a)
        if self.pairs:
            s, y, _ = self.pairs[-1]
            q *= float(s @ y) / float(y @ y)
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        return -q

    def update(self, s: Array, y: Array) -> None:
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            self.pairs.append((s, y, 1.0 / sy))

    def reset(self) -> None:
        self.pairs.clear()


def minimize(
    fun_grad: FunGrad,
    x0: Array,
    tol: float = 1e-8,
    max_iter: int = 5000,
    memory: int | None = None,
    project: Callable[[Array], Array] | None = None,
    stall_iters: int = 3,
    callback: Callable[[Array, float], None] | None = None,
) -> OptimizeResult:
    """Minimize ``fun_grad`` from ``x0``.

    Stops when the gradient sup-norm drops to ``tol`` or when the relative
    decrease of the objective stays below ``tol * (1 + |f|)`` for
    ``stall_iters`` consecutive iterations. ``memory=None`` selects dense
    BFGS, an integer the limited-memory update with that history.
    ``callback(x, f)`` is called after every accepted step.
    """
    fg = _Counter(fun_grad)
    x = np.array(x0, dtype=np.float64)
    if project is not None:
        x = project(x)
    f, g = fg(x)
    if not math.isfinite(f):
        raise LineSearchError("objective is not finite at the starting point")

    inv = _DenseInverse(x.size) if memory is None else _LimitedInverse(memory)
    stalls = 0
    it = 0
    reason = "max_iter"
    converged = False

    while True:
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm <= tol:
            converged, reason = True, "gradient"
            break
        if it >= max_iter:
            break

        p = inv.direction(g)
        if not float(g @ p) < 0:
            inv.reset()
            p = -g
        alpha0 = 1.0
        if isinstance(inv, _DenseInverse) and not inv.scaled or isinstance(inv, _LimitedInverse) and not inv.pairs:
            alpha0 = min(1.0, 1.0 / float(np.linalg.norm(g)))
        try:
            alpha, f_new, g_new = wolfe_search(fg, x, f, g, p, alpha0=alpha0)
        except LineSearchError:
            if isinstance(inv, _DenseInverse) and not inv.scaled or isinstance(inv, _LimitedInverse) and not inv.pairs:
                reason = "line_search"
                break
            log.debug("line search failed at iteration %d; restarting from steepest descent", it)
            inv.reset()
            stalls = 0
            continue

        s = alpha * p
        y = g_new - g
        inv.update(s, y)
        it += 1

        x_new = x + s
        if project is not None:
            x_new = project(x_new)
            f_new, g_new = fg(x_new)

        decrease = f - f_new
        stalls = stalls + 1 if decrease < tol * (1.0 + abs(f_new)) else 0
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(x, f)
        if stalls >= stall_iters:
            gnorm = float(np.max(np.abs(g))) if g.size else 0.0
            converged = True
            reason = "gradient" if gnorm <= tol else "stagnation"
            break

    return OptimizeResult(x=x, fun=f, grad=g, iterations=it, converged=converged, stop_reason=reason, evaluations=fg.calls)
