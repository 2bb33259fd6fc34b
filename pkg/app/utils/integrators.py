"""
Fixed-step classical Runge-Kutta integration shared by the master-equation
oracle and the classical RSJ/Duffing integrators.
"""

from typing import Callable, Optional, Tuple

import numpy as np

Rhs = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(rhs: Rhs, t: float, y: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step."""
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_count(t_span: Tuple[float, float], dt: float) -> int:
    """Number of dt steps covering t_span (rounded to the nearest integer)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_steps = int(round((t_span[1] - t_span[0]) / dt))
    if n_steps < 1:
        raise ValueError(f"t_span {tuple(t_span)} shorter than one step of {dt}")
    return n_steps


def rk4(rhs: Rhs, y0: np.ndarray, t_span: Tuple[float, float], dt: float,
        record_every: int = 1,
        validate: Optional[Callable[[float, np.ndarray], None]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate dy/dt = rhs(t, y) with fixed steps.

    Times are t0 + k*dt, computed by multiplication so that runs over the
    same span sample identical points.

    Args:
        rhs: Right-hand side f(t, y)
        y0: Initial state
        t_span: (t0, t1)
        dt: Step size
        record_every: Steps between stored samples
        validate: Called as validate(t, y) after every step; may raise

    Returns:
        (times, states) with states stacked along the first axis
    """
    if record_every < 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    t0 = float(t_span[0])
    n_steps = step_count(t_span, dt)

    y = np.array(y0, copy=True)
    times = [t0]
    states = [y.copy()]
    for step in range(n_steps):
        y = rk4_step(rhs, t0 + step * dt, y, dt)
        t = t0 + (step + 1) * dt
        if validate is not None:
            validate(t, y)
        if (step + 1) % record_every == 0:
            times.append(t)
            states.append(y.copy())
    return np.array(times), np.array(states)
