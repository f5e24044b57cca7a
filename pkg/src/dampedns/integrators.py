"""Time steppers for semilinear systems ``dy/dt = L y + N(y)`` with diagonal ``L``.

``L`` is a real array broadcast against the state, ``N`` an arbitrary callable
on the state array. Both steppers work on stacked states (base flow plus
tangent vectors), which is how the variational module keeps tangents
synchronized with the base trajectory.
"""

from __future__ import annotations

import math

import numpy as np

INTEGRATORS = ("exponential_rk4", "imex_cn_ab2")


def phi_functions(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``phi_1, phi_2, phi_3`` evaluated elementwise at real ``z``.

    Taylor series for ``|z| < 1`` (cancellation-free), closed forms otherwise.
    """
    z = np.asarray(z, dtype=np.float64)
    p1 = np.empty_like(z)
    p2 = np.empty_like(z)
    p3 = np.empty_like(z)
    small = np.abs(z) < 1.0
    zs = z[small]
    s1 = np.zeros_like(zs)
    s2 = np.zeros_like(zs)
    s3 = np.zeros_like(zs)
    for k in range(26, -1, -1):
        s1 = s1 * zs + 1.0 / math.factorial(k + 1)
        s2 = s2 * zs + 1.0 / math.factorial(k + 2)
        s3 = s3 * zs + 1.0 / math.factorial(k + 3)
    p1[small], p2[small], p3[small] = s1, s2, s3
    zb = z[~small]
    em1 = np.expm1(zb)
    p1[~small] = em1 / zb
    p2[~small] = (em1 - zb) / zb**2
    p3[~small] = (em1 - zb - 0.5 * zb**2) / zb**3
    return p1, p2, p3


class ExponentialRK4:
    """Cox-Matthews ETDRK4: the linear part is integrated exactly per mode."""

    name = "exponential_rk4"
    order = 4

    def __init__(self, lin: np.ndarray, dt: float):
        self.dt = float(dt)
        z = self.dt * np.asarray(lin, dtype=np.float64)
        self.E = np.exp(z)
        self.E2 = np.exp(0.5 * z)
        h1, _, _ = phi_functions(0.5 * z)
        self.Q = 0.5 * self.dt * h1
        p1, p2, p3 = phi_functions(z)
        self.f1 = self.dt * (p1 - 3 * p2 + 4 * p3)
        self.f2 = self.dt * (p2 - 2 * p3)
        self.f3 = self.dt * (4 * p3 - p2)

    def reset(self):
        pass

    def state(self):
        return None

    def load_state(self, history):
        pass

    def step(self, y: np.ndarray, nonlinear) -> np.ndarray:
        n0 = nonlinear(y)
        a = self.E2 * y + self.Q * n0
        na = nonlinear(a)
        b = self.E2 * y + self.Q * na
        nb = nonlinear(b)
        c = self.E2 * a + self.Q * (2 * nb - n0)
        nc = nonlinear(c)
        return self.E * y + self.f1 * n0 + 2 * self.f2 * (na + nb) + self.f3 * nc


class ImexCNAB2:
    """Crank-Nicolson on the linear part, second-order Adams-Bashforth on ``N``.

    The first step (no history) falls back to forward Euler for ``N``. The
    previous nonlinear evaluation is exposed through ``state()`` so that a
    checkpointed run resumes bit-identically.
    """

    name = "imex_cn_ab2"
    order = 2

    def __init__(self, lin: np.ndarray, dt: float):
        self.dt = float(dt)
        z = self.dt * np.asarray(lin, dtype=np.float64)
        self.num = 1.0 + 0.5 * z
        self.inv_den = 1.0 / (1.0 - 0.5 * z)
        self._prev = None

    def reset(self):
        self._prev = None

    def state(self):
        return self._prev

    def load_state(self, history):
        self._prev = None if history is None else np.array(history)

    def step(self, y: np.ndarray, nonlinear) -> np.ndarray:
        n0 = nonlinear(y)
        if self._prev is None or self._prev.shape != n0.shape:
            explicit = n0
        else:
            explicit = 1.5 * n0 - 0.5 * self._prev
        self._prev = n0
        return (self.num * y + self.dt * explicit) * self.inv_den


def make_integrator(name: str, lin: np.ndarray, dt: float):
    if name == "exponential_rk4":
        return ExponentialRK4(lin, dt)
    if name == "imex_cn_ab2":
        return ImexCNAB2(lin, dt)
    raise ValueError(f"unknown integrator {name!r}; expected one of {INTEGRATORS}")
