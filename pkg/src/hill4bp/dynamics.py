"""Model parameters, Hamiltonians, vector fields and symmetries of the
circular and elliptic Hill four-body problem in rotating coordinates.

States are arrays ``(x, y, px, py)``; velocities are ``xdot = px + y`` and
``ydot = py - x``.  The elliptic model keeps the forcing phase ``s`` as the
integration time, so ``s`` does not appear in the state vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import ParameterError, SingularityError

# integer tags understood by the compiled right-hand sides
SYSTEM_CIRCULAR = 0
SYSTEM_ELLIPTIC = 1
SYSTEM_VARIATIONAL = 2
SYSTEM_ACTION = 3

SYSTEM_DIMENSION = {SYSTEM_CIRCULAR: 4, SYSTEM_ELLIPTIC: 4, SYSTEM_VARIATIONAL: 20, SYSTEM_ACTION: 5}

# canonical symplectic matrix for (x, y, px, py)
J4 = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])


@dataclass(frozen=True)
class ModelParams:
    """Mass ratio, eccentricity and the derived potential coefficients."""

    mu: float
    eps: float = 0.0
    d: float = field(init=False)
    lambda1: float = field(init=False)
    lambda2: float = field(init=False)
    a: float = field(init=False)
    b: float = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.mu < 1.0) or not np.isfinite(self.mu):
            raise ParameterError(f"mass ratio must lie in (0, 1), got {self.mu}")
        if not (0.0 <= self.eps < 1.0) or not np.isfinite(self.eps):
            raise ParameterError(f"eccentricity must lie in [0, 1), got {self.eps}")
        d = np.sqrt(1.0 - 3.0 * self.mu + 3.0 * self.mu**2)
        lambda1 = 1.5 * (1.0 - d)
        lambda2 = 1.5 * (1.0 + d)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "lambda1", lambda1)
        object.__setattr__(self, "lambda2", lambda2)
        object.__setattr__(self, "a", 0.5 * (1.0 - lambda2))
        object.__setattr__(self, "b", 0.5 * (1.0 - lambda1))

    def as_array(self) -> np.ndarray:
        """Packed ``[a, b, eps]`` consumed by the compiled kernels."""
        return np.array([self.a, self.b, self.eps])

    def with_eps(self, eps: float) -> "ModelParams":
        return ModelParams(self.mu, eps)

    def to_config(self) -> str:
        return f"mu={self.mu!r}\neps={self.eps!r}\n"

    @classmethod
    def from_config(cls, text: str) -> "ModelParams":
        values = {"mu": DEFAULT_MU, "eps": 0.0}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            key = key.strip()
            if key in values:
                values[key] = float(value)
        return cls(values["mu"], values["eps"])


# Mass ratio reproducing the eight-digit orbit tables; see README for the
# comparison with the rounded value 0.00095.
DEFAULT_MU = 0.0009537


def derive_params(mu: float, eps: float = 0.0) -> ModelParams:
    return ModelParams(mu, eps)


class PhaseState(NamedTuple):
    """Point ``(x, y, px, py)`` of the planar phase space."""

    x: float
    y: float
    px: float
    py: float

    @property
    def xdot(self) -> float:
        return self.px + self.y

    @property
    def ydot(self) -> float:
        return self.py - self.x

    def velocity_form(self) -> np.ndarray:
        return to_velocity(np.asarray(self))

    @classmethod
    def from_velocity(cls, x, y, xdot, ydot) -> "PhaseState":
        return cls(x, y, xdot - y, ydot + x)


def to_velocity(state) -> np.ndarray:
    """(x, y, px, py) -> (x, y, xdot, ydot); works on stacked rows too."""
    s = np.array(state, dtype=float)
    out = s.copy()
    out[..., 2] = s[..., 2] + s[..., 1]
    out[..., 3] = s[..., 3] - s[..., 0]
    return out


def from_velocity(state) -> np.ndarray:
    """(x, y, xdot, ydot) -> (x, y, px, py)."""
    v = np.array(state, dtype=float)
    out = v.copy()
    out[..., 2] = v[..., 2] - v[..., 1]
    out[..., 3] = v[..., 3] + v[..., 0]
    return out


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True)
def _potential_gradient(x, y, a, b):
    """Gradient of U_rot = -a x^2 - b y^2 + 1/r."""
    r2 = x * x + y * y
    r3 = r2 * np.sqrt(r2)
    return -2.0 * a * x - x / r3, -2.0 * b * y - y / r3


@njit(cache=True)
def _h1_gradient(x, y, a, b):
    r2 = x * x + y * y
    r3 = r2 * np.sqrt(r2)
    return (1.0 - 2.0 * a) * x - x / r3, (1.0 - 2.0 * b) * y - y / r3


@njit(cache=True)
def _h1(x, y, a, b):
    return 0.5 * (x * x + y * y) - a * x * x - b * y * y + 1.0 / np.sqrt(x * x + y * y)


@njit(cache=True)
def _hessian_potential(x, y, a, b):
    r2 = x * x + y * y
    r = np.sqrt(r2)
    r3 = r2 * r
    r5 = r3 * r2
    uxx = -2.0 * a - 1.0 / r3 + 3.0 * x * x / r5
    uyy = -2.0 * b - 1.0 / r3 + 3.0 * y * y / r5
    uxy = 3.0 * x * y / r5
    return uxx, uxy, uyy


@njit(cache=True)
def rhs(kind, t, z, p, out):
    """Evaluate the vector field ``kind`` at (t, z) into ``out``.

    ``p`` is ``[a, b, eps]``.  For the elliptic field ``t`` is the forcing
    phase s.  The variational system stores the 4x4 STM row-major after the
    state; the action system appends the integrand px*xdot + py*ydot.
    """
    a = p[0]
    b = p[1]
    x = z[0]
    y = z[1]
    px = z[2]
    py = z[3]
    ux, uy = _potential_gradient(x, y, a, b)
    xdot = px + y
    ydot = py - x
    out[0] = xdot
    out[1] = ydot
    out[2] = py + ux
    out[3] = -px + uy
    if kind == SYSTEM_ELLIPTIC:
        gx, gy = _h1_gradient(x, y, a, b)
        c = p[2] * np.cos(t)
        out[2] -= c * gx
        out[3] -= c * gy
    elif kind == SYSTEM_VARIATIONAL:
        uxx, uxy, uyy = _hessian_potential(x, y, a, b)
        for j in range(4):
            m0 = z[4 + j]
            m1 = z[8 + j]
            m2 = z[12 + j]
            m3 = z[16 + j]
            out[4 + j] = m1 + m2
            out[8 + j] = -m0 + m3
            out[12 + j] = uxx * m0 + uxy * m1 + m3
            out[16 + j] = uxy * m0 + uyy * m1 - m2
    elif kind == SYSTEM_ACTION:
        out[4] = px * xdot + py * ydot


@njit(cache=True)
def _energy_rows(z, a, b):
    n = z.shape[0]
    out = np.empty(n)
    for i in range(n):
        x = z[i, 0]
        y = z[i, 1]
        px = z[i, 2]
        py = z[i, 3]
        u = -a * x * x - b * y * y + 1.0 / np.sqrt(x * x + y * y)
        out[i] = 0.5 * (px * px + py * py) + y * px - x * py - u
    return out


@njit(cache=True)
def _h1_rows(z, a, b):
    n = z.shape[0]
    out = np.empty(n)
    for i in range(n):
        out[i] = _h1(z[i, 0], z[i, 1], a, b)
    return out


# ---------------------------------------------------------------------------
# public functions


def _check_radius(x, y):
    r = np.hypot(x, y)
    if np.any(r == 0.0):
        raise SingularityError("potential evaluated at the position of the small primary (r = 0)")


def u_rot(x, y, params: ModelParams):
    _check_radius(x, y)
    return -params.a * np.square(x) - params.b * np.square(y) + 1.0 / np.hypot(x, y)


def effective_potential(x, y, params: ModelParams):
    _check_radius(x, y)
    return 0.5 * (params.lambda2 * np.square(x) + params.lambda1 * np.square(y)) + 1.0 / np.hypot(x, y)


def energy_ch4bp(state, params: ModelParams):
    """Energy of the circular model; accepts one state or an (n, 4) stack."""
    z = np.asarray(state, dtype=float)
    x, y, px, py = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    return 0.5 * (px**2 + py**2) + y * px - x * py - u_rot(x, y, params)


def h1_perturbation(x, y, params: ModelParams):
    """First-order eccentricity term of the elliptic Hamiltonian."""
    return 0.5 * (np.square(x) + np.square(y)) + u_rot(x, y, params)


def h1_gradient(x, y, params: ModelParams):
    """(dH1/dx, dH1/dy); scalars give a tuple, arrays give two arrays."""
    _check_radius(x, y)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return _h1_gradient(float(x), float(y), params.a, params.b)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r3 = np.hypot(x, y) ** 3
    return (1.0 - 2.0 * params.a) * x - x / r3, (1.0 - 2.0 * params.b) * y - y / r3


def energy_eh4bp(state, s, params: ModelParams):
    z = np.asarray(state, dtype=float)
    return energy_ch4bp(z, params) + params.eps * np.cos(s) * h1_perturbation(z[..., 0], z[..., 1], params)


def _evaluate(kind, t, z, params):
    z = np.ascontiguousarray(z, dtype=float)
    _check_radius(z[0], z[1])
    out = np.empty_like(z)
    rhs(kind, float(t), z, params.as_array(), out)
    return out


def field_ch4bp(state, params: ModelParams) -> np.ndarray:
    return _evaluate(SYSTEM_CIRCULAR, 0.0, state, params)


def field_eh4bp(state, s: float, params: ModelParams) -> np.ndarray:
    """Vector field of the first-order elliptic model at forcing phase s.

    Returns the derivative of ``(x, y, px, py)``; the phase itself advances
    at unit rate.
    """
    return _evaluate(SYSTEM_ELLIPTIC, s, state, params)


def jacobian_ch4bp(state, params: ModelParams) -> np.ndarray:
    x, y = float(state[0]), float(state[1])
    _check_radius(x, y)
    uxx, uxy, uyy = _hessian_potential(x, y, params.a, params.b)
    return np.array(
        [
            [0.0, 1.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0, 1.0],
            [uxx, uxy, 0.0, 1.0],
            [uxy, uyy, -1.0, 0.0],
        ]
    )


def field_variational(state, stm, params: ModelParams):
    """Derivatives of the state and of its state-transition matrix."""
    z = np.concatenate([np.asarray(state, dtype=float), np.asarray(stm, dtype=float).ravel()])
    out = _evaluate(SYSTEM_VARIATIONAL, 0.0, z, params)
    return out[:4], out[4:].reshape(4, 4)


SYMMETRIES = {
    # (sign pattern on (x, y, px, py), reverses time)
    "S": (np.array([1.0, -1.0, -1.0, 1.0]), True),
    "S'": (np.array([-1.0, 1.0, 1.0, -1.0]), True),
    "S''": (np.array([-1.0, -1.0, -1.0, -1.0]), False),
}
_SYMMETRY_ALIASES = {"S": "S", "S'": "S'", "S′": "S'", "Sp": "S'", "S''": "S''", "S″": "S''", "Spp": "S''"}


def symmetry_signs(which: str) -> tuple[np.ndarray, bool]:
    try:
        return SYMMETRIES[_SYMMETRY_ALIASES[which]]
    except KeyError:
        raise ValueError(f"unknown symmetry {which!r}") from None


def apply_symmetry(state, which: str = "S") -> np.ndarray:
    """Apply S, S' or S'' in momentum coordinates (works on stacks)."""
    signs, _ = symmetry_signs(which)
    return np.asarray(state, dtype=float) * signs


def apply_symmetry_velocity(state, which: str = "S") -> np.ndarray:
    """Same symmetry acting on (x, y, xdot, ydot)."""
    return to_velocity(apply_symmetry(from_velocity(state), which))


def reverses_time(which: str) -> bool:
    return symmetry_signs(which)[1]
