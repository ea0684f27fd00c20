### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Ensemble model: per-atom coupling fields, Gaussian ensembles and Dicke labels
### to be imported by the kernels, engines, experiments and run script
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import math
import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

GENERATOR_NAME = "numpy.PCG64"

############################################################################ EXCEPTION CLASSES  #######################################################################################

class InvalidParameterError(ValueError):
    """Exception class for non-finite fields, inconsistent labels or malformed states"""
    def __init__(self, message="Invalid ensemble parameter supplied"):
        self.message = message
        super().__init__(self.message)

def _check_finite(name, *values):
    for v in values:
        if not np.isfinite(v):
            raise InvalidParameterError(f'{name} must be finite, got {v!r}')

################################################################################### FIELD TYPES ################################################################################

@dataclass(frozen=True)
class RawAtomParams:
    """Detuning omega_a (real) and Rabi coupling g0 (complex) of one atom, angular frequency units."""
    detuning: float
    rabi: complex = 0j

    def __post_init__(self):
        _check_finite('detuning', self.detuning)
        _check_finite('rabi', complex(self.rabi).real, complex(self.rabi).imag)

@dataclass(frozen=True)
class FieldVector:
    bx: float
    by: float
    bz: float

    def __post_init__(self):
        _check_finite('field component', self.bx, self.by, self.bz)

    @classmethod
    def from_array(cls, values) -> "FieldVector":
        bx, by, bz = (float(v) for v in values)
        return cls(bx, by, bz)

    def as_array(self) -> np.ndarray:
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.bx**2 + self.by**2 + self.bz**2)

    @property
    def direction(self) -> Optional[np.ndarray]:
        # n-hat is undefined for a vanishing field
        b = self.magnitude
        if b == 0.0:
            return None
        return self.as_array() / b

    @property
    def is_longitudinal(self) -> bool:
        return self.bx == 0.0 and self.by == 0.0

### Maps the two-level Hamiltonian 1/2 w sz + 1/2 (g0 s+ + h.c.) onto B.sigma with s+- = sx +- i sy
def map_raw_to_field(params: RawAtomParams) -> FieldVector:
    g0 = complex(params.rabi)
    return FieldVector(0.5 * g0.real, -0.5 * g0.imag, 0.5 * params.detuning)

################################################################################### ENSEMBLES ################################################################################

@dataclass(frozen=True)
class FieldDistribution:
    """Independent Gaussian per component: mean vector, per-component sigma and a 64-bit seed."""
    mean: FieldVector
    sigma: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if len(self.sigma) != 3:
            raise InvalidParameterError(f'sigma needs three components, got {len(self.sigma)}')
        _check_finite('sigma', *self.sigma)
        if any(s < 0 for s in self.sigma):
            raise InvalidParameterError(f'sigma components must be non-negative, got {self.sigma}')
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError(f'seed must be a 64-bit unsigned integer, got {self.seed}')
        object.__setattr__(self, 'sigma', tuple(float(s) for s in self.sigma))
        object.__setattr__(self, 'seed', int(self.seed))

    @property
    def is_longitudinal(self) -> bool:
        return self.mean.is_longitudinal and self.sigma[0] == 0.0 and self.sigma[1] == 0.0

    def to_dict(self) -> dict:
        return {'mean': list(self.mean.as_array()), 'sigma': list(self.sigma),
                'seed': self.seed, 'generator': GENERATOR_NAME}

@dataclass(frozen=True, eq=False)
class AtomicEnsemble:
    """N per-atom fields stored as a read-only (N, 3) array, with sampling provenance."""
    fields: np.ndarray
    distribution: Optional[FieldDistribution] = None
    label: str = 'explicit'

    def __post_init__(self):
        arr = np.array(self.fields, dtype=float, copy=True)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise InvalidParameterError(f'ensemble fields must have shape (N>=1, 3), got {arr.shape}')
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError('ensemble fields must be finite')
        arr.setflags(write=False)
        object.__setattr__(self, 'fields', arr)

    @classmethod
    def homogeneous(cls, field_vector: FieldVector, n_atoms: int) -> "AtomicEnsemble":
        return cls(np.tile(field_vector.as_array(), (n_atoms, 1)), label='homogeneous')

    @classmethod
    def longitudinal(cls, bz_values) -> "AtomicEnsemble":
        bz = np.asarray(bz_values, dtype=float).reshape(-1)
        return cls(np.column_stack([np.zeros_like(bz), np.zeros_like(bz), bz]), label='longitudinal')

    @property
    def n_atoms(self) -> int:
        return self.fields.shape[0]

    def field(self, k: int) -> FieldVector:
        return FieldVector.from_array(self.fields[k])

    @property
    def mean_field(self) -> FieldVector:
        return FieldVector.from_array(self.fields.mean(axis=0))

    @property
    def is_longitudinal(self) -> bool:
        return bool(np.all(self.fields[:, :2] == 0.0))

    @property
    def seed(self) -> Optional[int]:
        return None if self.distribution is None else self.distribution.seed

    def content_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.fields).tobytes()).hexdigest()

    def scaled(self, factor: float) -> "AtomicEnsemble":
        return AtomicEnsemble(self.fields * factor, distribution=None, label=f'{self.label}*{factor!r}')

    def shifted(self, offset) -> "AtomicEnsemble":
        return AtomicEnsemble(self.fields + np.asarray(offset, dtype=float), distribution=None,
                              label=f'{self.label}+shift')

def sample_ensemble(dist: FieldDistribution, n_atoms: int) -> AtomicEnsemble:
    if int(n_atoms) < 1:
        raise InvalidParameterError(f'n_atoms must be >= 1, got {n_atoms}')

    rng = np.random.Generator(np.random.PCG64(dist.seed))
    mean = dist.mean.as_array()
    sigma = np.asarray(dist.sigma, dtype=float)
    draws = rng.normal(loc=mean, scale=sigma, size=(int(n_atoms), 3))

    # degenerate components reproduce the mean bit for bit
    draws = np.where(sigma == 0.0, mean, draws)

    return AtomicEnsemble(draws, distribution=dist, label='gaussian')

### Empirical mean field and per-atom fluctuations b_k = B_k - mean
def decompose(ensemble: AtomicEnsemble) -> Tuple[FieldVector, np.ndarray]:
    mean = ensemble.fields.mean(axis=0)
    fluctuations = ensemble.fields - mean
    return FieldVector.from_array(mean), fluctuations

def fluctuation_tolerance(ensemble: AtomicEnsemble) -> float:
    return 1e-12 * ensemble.n_atoms * max(float(np.max(np.abs(ensemble.fields))), 1e-300)

################################################################################### DICKE BASIS ################################################################################

@dataclass(frozen=True, order=True)
class DickeLabel:
    """Doubled quantum numbers (2J, 2M) of a symmetric collective state."""
    two_j: int
    two_m: int

    def __post_init__(self):
        if int(self.two_j) != self.two_j or int(self.two_m) != self.two_m:
            raise InvalidParameterError(f'doubled quantum numbers must be integers, got ({self.two_j}, {self.two_m})')
        if self.two_j < 0 or abs(self.two_m) > self.two_j or (self.two_j - self.two_m) % 2 != 0:
            raise InvalidParameterError(f'invalid Dicke label 2J={self.two_j}, 2M={self.two_m}')
        object.__setattr__(self, 'two_j', int(self.two_j))
        object.__setattr__(self, 'two_m', int(self.two_m))

    @classmethod
    def from_jm(cls, j: float, m: float) -> "DickeLabel":
        two_j, two_m = 2 * j, 2 * m
        if abs(two_j - round(two_j)) > 1e-9 or abs(two_m - round(two_m)) > 1e-9:
            raise InvalidParameterError(f'J and M must be half-integers, got J={j}, M={m}')
        return cls(int(round(two_j)), int(round(two_m)))

    @classmethod
    def for_ensemble(cls, n_atoms: int, m: float) -> "DickeLabel":
        return cls.from_jm(n_atoms / 2, m)

    @classmethod
    def from_excitations(cls, n_atoms: int, n_up: int) -> "DickeLabel":
        return cls(int(n_atoms), 2 * int(n_up) - int(n_atoms))

    @classmethod
    def nearest(cls, n_atoms: int, m: float) -> "DickeLabel":
        # closest admissible M for this N (2M shares the parity of N)
        n_up = int(round(m + n_atoms / 2))
        return cls.from_excitations(n_atoms, min(max(n_up, 0), n_atoms))

    @property
    def j(self) -> float:
        return self.two_j / 2

    @property
    def m(self) -> float:
        return self.two_m / 2

    @property
    def n_atoms(self) -> int:
        return self.two_j

    @property
    def excitations(self) -> int:
        return (self.two_j + self.two_m) // 2

    def check_ensemble(self, n_atoms: int) -> None:
        if self.two_j != n_atoms:
            raise InvalidParameterError(f'label 2J={self.two_j} does not match ensemble of N={n_atoms} atoms')

def log_binomial(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))

### ln N_JM with N_JM = sqrt((J+M)!(J-M)! 2^N / (2J)!)
def log_dicke_norm(label: DickeLabel) -> float:
    n_atoms, n_up = label.two_j, label.excitations
    return 0.5 * (n_atoms * math.log(2.0) - log_binomial(n_atoms, n_up))

@dataclass(frozen=True)
class SuperpositionState:
    """Normalized superposition sum_M c_M |J,M> over distinct labels of a common J."""
    terms: Tuple[Tuple[DickeLabel, complex], ...]

    def __post_init__(self):
        terms = tuple((lab, complex(c)) for lab, c in self.terms)
        if not terms:
            raise InvalidParameterError('superposition needs at least one term')
        two_js = {lab.two_j for lab, _ in terms}
        if len(two_js) != 1:
            raise InvalidParameterError(f'all labels must share 2J, got {sorted(two_js)}')
        if len({lab for lab, _ in terms}) != len(terms):
            raise InvalidParameterError('superposition labels must be distinct')
        norm = sum(abs(c)**2 for _, c in terms)
        if abs(norm - 1.0) > 1e-12:
            raise InvalidParameterError(f'coefficients must be normalized, sum |c|^2 = {norm!r}')
        object.__setattr__(self, 'terms', terms)

    @classmethod
    def normalized(cls, labels: Sequence[DickeLabel], amplitudes: Sequence[complex]) -> "SuperpositionState":
        amps = np.asarray(amplitudes, dtype=complex)
        norm = np.sqrt(np.sum(np.abs(amps)**2))
        if norm == 0:
            raise InvalidParameterError('cannot normalize a zero state')
        return cls(tuple(zip(labels, amps / norm)))

    @property
    def two_j(self) -> int:
        return self.terms[0][0].two_j

    @property
    def labels(self) -> Tuple[DickeLabel, ...]:
        return tuple(lab for lab, _ in self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([c for _, c in self.terms], dtype=complex)
