### SpinFade, leakage of collective spin states under inhomogeneous coupling
### SU(2) kernels: closed-form propagators, per-atom interference operators and G-factors
### Basis order is (up, down); sigma+- = sigma_x +- i sigma_y
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from Ensemble_model import FieldVector

IDENTITY = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)

############################################################################## PROPAGATORS ##############################################################################

### exp(-i t b.sigma) = cos(|b|t) - i sin(|b|t) n.sigma, broadcasting b (..., 3) against t
def exp_field(b, t) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    t = np.asarray(t, dtype=float)

    mag = np.sqrt(np.sum(b * b, axis=-1))
    nonzero = mag > 0.0
    n = np.where(nonzero[..., None], b / np.where(nonzero, mag, 1.0)[..., None], 0.0)

    theta = mag * t
    c, s = np.cos(theta), np.sin(theta)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]

    shape = np.broadcast(theta, nx).shape
    out = np.empty(shape + (2, 2), dtype=complex)
    out[..., 0, 0] = c - 1j * s * nz
    out[..., 0, 1] = -1j * s * nx - s * ny
    out[..., 1, 0] = -1j * s * nx + s * ny
    out[..., 1, 1] = c + 1j * s * nz
    return out

def propagator(field: FieldVector, t: float) -> np.ndarray:
    if not np.isfinite(t):
        raise ValueError(f'time must be finite, got {t!r}')
    return exp_field(field.as_array(), t)

### Per-atom factor of U0^dagger(t) U(t): exp(+i t mean.sigma) exp(-i t B_k.sigma)
def interference_operator(mean: FieldVector, atom_field: FieldVector, t: float) -> np.ndarray:
    if not np.isfinite(t):
        raise ValueError(f'time must be finite, got {t!r}')
    return exp_field(mean.as_array(), -t) @ exp_field(atom_field.as_array(), t)

### Vectorized interference operators, fields (..., 3) and times (T,) -> (..., T, 2, 2)
def interference_series(mean, fields, times) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    fields = np.asarray(fields, dtype=float)
    times = np.asarray(times, dtype=float)
    u0_dag = exp_field(mean, -times)
    u = exp_field(fields[..., None, :], times)
    return np.matmul(u0_dag, u)

def is_unitary(op, tol=1e-12) -> bool:
    op = np.asarray(op)
    return bool(np.max(np.abs(op.conj().T @ op - IDENTITY)) <= tol)

########################################################################## ROTATION PARAMETERS ###########################################################################

### Decomposes O = R 1 + i I.sigma
def rotation_parameters(op) -> Tuple[float, np.ndarray]:
    op = np.asarray(op, dtype=complex)
    r = 0.5 * (op[0, 0] + op[1, 1])
    ix = (op[0, 1] + op[1, 0]) / 2j
    iy = 0.5 * (op[0, 1] - op[1, 0])
    iz = (op[0, 0] - op[1, 1]) / 2j
    return float(r.real), np.array([ix.real, iy.real, iz.real])

### Closed-form R, I of exp(+i t B.sigma) exp(-i t B_k.sigma).
### The n_k term enters with a minus sign, otherwise B_k = B would not give the identity.
def rotation_parameters_closed_form(mean: FieldVector, atom_field: FieldVector, t: float) -> Tuple[float, np.ndarray]:
    b, bk = mean.magnitude, atom_field.magnitude
    n = mean.direction if b > 0 else np.zeros(3)
    nk = atom_field.direction if bk > 0 else np.zeros(3)

    c0, s0 = np.cos(b * t), np.sin(b * t)
    ck, sk = np.cos(bk * t), np.sin(bk * t)

    r = c0 * ck + np.dot(n, nk) * s0 * sk
    i_vec = n * s0 * ck - nk * c0 * sk + np.cross(n, nk) * s0 * sk
    return float(r), i_vec

############################################################################### G-FACTORS ################################################################################

@dataclass(frozen=True)
class GFactor:
    """Coefficients of 1, x = e^{i theta}, y = e^{-i theta'} and xy in the per-atom factor G."""
    a: complex
    b: complex
    c: complex
    d: complex

    def evaluate(self, theta, theta_prime):
        x = np.exp(1j * np.asarray(theta))
        y = np.exp(-1j * np.asarray(theta_prime))
        return self.a + self.b * x + self.c * y + self.d * x * y

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=complex)

### (a, b, c, d) = 1/2 (O_dd, O_du, O_ud, O_uu): sigma+/2 |d> = |u>
def g_factor(op) -> GFactor:
    op = np.asarray(op, dtype=complex)
    if not np.all(np.isfinite(op)):
        raise ValueError('operator entries must be finite')
    return GFactor(a=0.5 * op[1, 1], b=0.5 * op[1, 0], c=0.5 * op[0, 1], d=0.5 * op[0, 0])
