"""Small ODE drivers shared by the geodesic and medium tracers.

Fixed-step classical RK4 is written out here; the embedded adaptive schemes
are delegated to :func:`scipy.integrate.solve_ivp`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StepSizeUnderflow

ADAPTIVE_METHODS = {"rk45": "RK45", "dop853": "DOP853"}


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    steps: np.ndarray = field(default_factory=lambda: np.empty(0))
    method: str = "rk4"


def rk4_step(fun, t, y, h):
    k1 = fun(t, y)
    k2 = fun(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = fun(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = fun(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_count(t0, t1, h):
    n = (t1 - t0) / h
    return max(1, int(math.ceil(n - 1e-9)))


def integrate_rk4(fun, t0, y0, t1, h, sample_every=1, post_step=None, max_steps=None, stop=None):
    """March with constant step ``h`` (the last step is shortened to land on t1).

    ``post_step(i, t, y)`` may return a modified state (used for constraint
    projection). ``stop(t, y)`` ends the march early when it returns True.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    n = step_count(t0, t1, h)
    if max_steps is not None and n > max_steps:
        raise StepSizeUnderflow(f"{n} steps requested, limit is {max_steps}", "ode.integrate_rk4")
    y = np.array(y0, dtype=float)
    ts = [t0]
    ys = [y.copy()]
    steps = []
    t = t0
    for i in range(1, n + 1):
        t_next = t0 + i * h if i < n else t1
        dt = t_next - t
        y = rk4_step(fun, t, y, dt)
        if post_step is not None:
            y = post_step(i, t_next, y)
        t = t_next
        steps.append(dt)
        done = stop is not None and stop(t, y)
        if i % sample_every == 0 or i == n or done:
            ts.append(t)
            ys.append(y.copy())
        if done:
            break
    return Solution(np.array(ts), np.array(ys), np.array(steps), "rk4")


def integrate_adaptive(fun, t0, y0, t1, method="dop853", rtol=1e-10, atol=1e-12, t_eval=None,
                       sample_every=1, events=None, max_step=np.inf):
    sol = solve_ivp(
        fun,
        (t0, t1),
        np.asarray(y0, dtype=float),
        method=ADAPTIVE_METHODS[method],
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        events=events,
        max_step=max_step,
    )
    if sol.status == -1:
        raise StepSizeUnderflow(sol.message, "ode.integrate_adaptive")
    t = sol.t
    y = sol.y.T
    steps = np.diff(t)
    if t_eval is None and sample_every > 1:
        keep = np.zeros(len(t), dtype=bool)
        keep[::sample_every] = True
        keep[-1] = True
        t, y = t[keep], y[keep]
    out = Solution(t, y, steps, method)
    out.events = sol.t_events
    return out
