"""Shared numerical substrate.

Adaptive ODE integration with dense output, event location and running
accumulators; symmetric generalized eigensolve; damped least squares with
finite-difference Jacobians. Everything downstream (section returns, support
solves, certificates) is built on these three operations.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.linalg import eigh
from scipy.optimize import brentq

__all__ = [
    "KernelError", "DomainExit", "StiffOrSingular", "EventSpec", "Trajectory",
    "integrate", "sym_gen_eig", "damped_least_squares", "LeastSquaresResult",
]

EPS = np.finfo(float).eps


class KernelError(RuntimeError):
    """Base class for numerical-kernel failures."""


class DomainExit(KernelError):
    """Right-hand-side domain guard fired; carries the guard name."""

    def __init__(self, guard: str):
        super().__init__(f"domain-exit: {guard}")
        self.guard = guard


class StiffOrSingular(KernelError):
    """Adaptive step size underflowed."""

    def __init__(self, message: str = "stiff-or-singular"):
        super().__init__(message)


@dataclass(frozen=True)
class EventSpec:
    """Scalar event g(y) = 0 located on the dense output.

    direction: +1 fires on upward crossings (g increasing), -1 on downward,
    0 on any sign change. With skip_initial the event is disarmed until
    |g| first exceeds arm_threshold, so a trajectory starting exactly on
    the event surface does not terminate at t0.
    """

    fn: Callable[[np.ndarray], float]
    direction: int = 0
    skip_initial: bool = False
    tolerance: float = 1e-13
    arm_threshold: float = 1e-8
    terminal: bool = True
    name: str = "event"


class _DenseSolution:
    """Piecewise dense output over accepted solver steps."""

    def __init__(self, ts: list[float], interps: list):
        self._ts = ts          # segment breakpoints, len = nseg + 1
        self._interps = interps

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty((t_arr.size, self._interps[0](self._ts[0]).size))
        for i, ti in enumerate(t_arr):
            k = bisect.bisect_right(self._ts, ti) - 1
            k = min(max(k, 0), len(self._interps) - 1)
            out[i] = self._interps[k](ti)
        return out[0] if np.isscalar(t) or np.ndim(t) == 0 else out


@dataclass
class Trajectory:
    """Adaptive integration result with dense interpolant and accumulators."""

    t: np.ndarray
    y: np.ndarray                       # nodes x state-dim (accumulators excluded)
    acc: dict[str, np.ndarray] = field(default_factory=dict)
    event_name: str | None = None
    event_time: float | None = None
    event_state: np.ndarray | None = None
    _dense: _DenseSolution | None = None
    _dim: int = 0

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def tf(self) -> float:
        return float(self.t[-1])

    def state(self, t):
        """Dense state evaluation (accumulator components stripped)."""
        full = self._dense(t)
        return full[..., : self._dim]

    def accumulator(self, name: str, t=None):
        """Accumulator value at t (default: final value)."""
        names = list(self.acc)
        k = names.index(name)
        if t is None:
            return float(self.acc[name][-1])
        full = self._dense(t)
        return full[..., self._dim + k]

    def __call__(self, t):
        return self.state(t)


def integrate(
    rhs: Callable,
    y0,
    horizon: float,
    events: Sequence[EventSpec] = (),
    accumulators: Sequence[tuple[str, Callable]] = (),
    rtol: float = 1e-12,
    atol: float = 1e-12,
    max_step: float = np.inf,
    t0: float = 0.0,
) -> Trajectory:
    """Integrate rhs(t, y) adaptively from t0 over the given horizon.

    Accumulators are (name, fn(t, y)) pairs appended to the state so their
    quadrature shares the integrator's error control. The first terminal
    event stops integration at the located event time.
    """
    y0 = np.asarray(y0, dtype=float)
    dim = y0.size
    accs = list(accumulators)

    def rhs_aug(t, ya):
        y = ya[:dim]
        dy = np.asarray(rhs(t, y), dtype=float)
        if accs:
            da = [fn(t, y) for _, fn in accs]
            return np.concatenate([dy, da])
        return dy

    ya0 = np.concatenate([y0, np.zeros(len(accs))]) if accs else y0
    solver = DOP853(rhs_aug, t0, ya0, t0 + horizon, rtol=rtol, atol=atol,
                    max_step=max_step)

    ts = [t0]
    ys = [ya0.copy()]
    seg_ts: list[float] = [t0]
    interps: list = []
    g_prev = [ev.fn(y0) for ev in events]
    armed = [not ev.skip_initial or abs(g_prev[i]) > ev.arm_threshold
             for i, ev in enumerate(events)]
    hit: tuple[int, float] | None = None

    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise StiffOrSingular(f"stiff-or-singular: {msg}")
        interp = solver.dense_output()
        interps.append(interp)
        seg_ts.append(solver.t)
        t_new = solver.t
        y_new = solver.y[:dim]

        for i, ev in enumerate(events):
            g_new = ev.fn(y_new)
            if not armed[i]:
                if abs(g_new) > ev.arm_threshold:
                    armed[i] = True
                g_prev[i] = g_new
                continue
            g_old = g_prev[i]
            crossed = (
                (g_old < 0.0 <= g_new and ev.direction >= 0)
                or (g_old > 0.0 >= g_new and ev.direction <= 0)
            ) and g_old != g_new
            if crossed:
                gfun = lambda s: ev.fn(interp(s)[:dim])
                t_old = ts[-1]
                try:
                    t_star = brentq(gfun, t_old, t_new, xtol=1e-15, rtol=4 * EPS)
                except ValueError:
                    # root lies at a bracket end within rounding
                    t_star = t_old if abs(gfun(t_old)) < abs(gfun(t_new)) else t_new
                if abs(gfun(t_star)) > max(ev.tolerance, 1e3 * EPS * max(1.0, abs(g_old))):
                    raise KernelError(
                        f"event '{ev.name}' located poorly: |g|={abs(gfun(t_star)):.3e}")
                if hit is None or t_star < hit[1]:
                    hit = (i, t_star)
            g_prev[i] = g_new

        if hit is not None and events[hit[0]].terminal:
            i, t_star = hit
            ya_star = interp(t_star)
            ts.append(t_star)
            ys.append(ya_star)
            seg_ts[-1] = t_star
            traj = _package(ts, ys, seg_ts, interps, accs, dim)
            traj.event_name = events[i].name
            traj.event_time = t_star
            traj.event_state = ya_star[:dim]
            return traj
        hit = None

        ts.append(t_new)
        ys.append(solver.y.copy())

    return _package(ts, ys, seg_ts, interps, accs, dim)


def _package(ts, ys, seg_ts, interps, accs, dim) -> Trajectory:
    t = np.asarray(ts)
    Y = np.asarray(ys)
    acc = {name: Y[:, dim + k] for k, (name, _) in enumerate(accs)}
    dense = _DenseSolution(seg_ts, interps) if interps else _DenseSolution(
        [t[0], t[0]], [lambda s, y0=Y[0]: y0])
    return Trajectory(t=t, y=Y[:, :dim], acc=acc, _dense=dense, _dim=dim)


def sym_gen_eig(K, M, pd_tol: float = 1e-12):
    """Solve K u = w M u for symmetric K and SPD M.

    Returns eigenvalues ascending and M-orthonormal eigenvectors as columns.
    """
    K = np.asarray(K, dtype=float)
    M = np.asarray(M, dtype=float)
    scale = np.trace(M) / M.shape[0]
    if np.linalg.eigvalsh(M).min() <= pd_tol * scale:
        raise KernelError("indefinite-metric")
    w, V = eigh(K, M)
    return w, V


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual: np.ndarray           # unscaled r(x)
    scaled_residual: np.ndarray    # W r(x)
    scaled_norm: float
    converged: bool
    iterations: int
    message: str


def damped_least_squares(
    residual: Callable[[np.ndarray], np.ndarray],
    x0,
    scaling=None,
    tol: float = 1e-12,
    max_iter: int = 200,
    fd_step: float | None = None,
    x_scale=None,
    lam0: float = 1e-3,
) -> LeastSquaresResult:
    """Levenberg-style damped least squares on the scaled residual W r(x).

    W is an invertible diagonal weighting, so the scaled and unscaled zero
    sets coincide; the unscaled residual is always reported alongside.
    Jacobians are central finite differences with step sqrt(eps)*max(1,|x|)
    unless fd_step overrides the relative step.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    W = np.ones_like(np.asarray(residual(x), dtype=float)) if scaling is None \
        else np.asarray(scaling, dtype=float)
    if np.any(W == 0.0):
        raise KernelError("scaling must be invertible (no zero weights)")
    xs = np.ones(n) if x_scale is None else np.asarray(x_scale, dtype=float)
    h_rel = math.sqrt(EPS) if fd_step is None else fd_step

    def rho(xv):
        return W * np.asarray(residual(xv), dtype=float)

    r = rho(x)
    cost = float(r @ r)
    lam = lam0
    it = 0
    message = "max-iterations"
    converged = False
    for it in range(1, max_iter + 1):
        if math.sqrt(cost) <= tol:
            converged = True
            message = "converged"
            break
        J = np.empty((r.size, n))
        for k in range(n):
            h = h_rel * max(1.0, abs(x[k])) * xs[k]
            xp = x.copy(); xp[k] += h
            xm = x.copy(); xm[k] -= h
            J[:, k] = (rho(xp) - rho(xm)) / (2.0 * h)
        if not np.all(np.isfinite(J)):
            raise KernelError("singular-jacobian")
        JtJ = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(JtJ), 1e-14)
        accepted = False
        for _ in range(30):
            try:
                dx = np.linalg.solve(JtJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = rho(x + dx)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                x = x + dx
                r, cost = r_new, cost_new
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if not accepted:
            if np.linalg.norm(g) < 1e-14 * max(1.0, math.sqrt(cost)):
                message = "stalled-at-gradient-zero"
            else:
                message = "singular-jacobian"
            break
    else:
        it = max_iter
    if math.sqrt(cost) <= tol:
        converged = True
        message = "converged"
    r_unscaled = np.asarray(residual(x), dtype=float)
    return LeastSquaresResult(
        x=x, residual=r_unscaled, scaled_residual=W * r_unscaled,
        scaled_norm=float(np.linalg.norm(W * r_unscaled)),
        converged=converged, iterations=it, message=message)
