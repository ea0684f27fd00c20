### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Overlap engines: O_{M'M}(t) = <J,M'| U0^dagger(t) U(t) |J,M> by three cross-validating algorithms
### statevector oracle (N <= 22), dephasing recurrence (pure-z fields), general truncated 2D recurrence
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from Ensemble_model import (AtomicEnsemble, DickeLabel, InvalidParameterError, SuperpositionState,
                            GENERATOR_NAME, log_binomial)
from SU2_kernels import exp_field, interference_series

DEFAULT_BUDGET = 2e10
DEFAULT_CHUNK_BYTES = 64 * 2**20

################################################################################### TIME GRIDS ################################################################################

@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float, copy=True).reshape(-1)
        if t.size == 0:
            raise InvalidParameterError('time grid needs at least one point')
        if not np.all(np.isfinite(t)):
            raise InvalidParameterError('time grid must be finite')
        if t[0] < 0:
            raise InvalidParameterError(f'time grid must start at t >= 0, got {t[0]!r}')
        if np.any(np.diff(t) <= 0):
            raise InvalidParameterError('time grid must be strictly increasing')
        t.setflags(write=False)
        object.__setattr__(self, 'times', t)

    @classmethod
    def uniform(cls, t_max: float, points: int, t_min: float = 0.0) -> "TimeGrid":
        if points < 2:
            return cls(np.array([t_min], dtype=float))
        return cls(np.linspace(t_min, t_max, int(points)))

    def __len__(self):
        return self.times.size

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def spacing(self) -> float:
        return float(np.min(np.diff(self.times))) if self.times.size > 1 else 0.0

    def extended(self, factor: float = 2.0) -> "TimeGrid":
        return TimeGrid.uniform(self.times[0] + factor * (self.t_max - self.times[0]), len(self), self.times[0])

@dataclass(eq=False)
class OverlapSeries:
    grid: TimeGrid
    values: np.ndarray
    m_prime: DickeLabel
    m: DickeLabel
    meta: Dict = field(default_factory=dict)

    @property
    def labels(self) -> Tuple[DickeLabel, DickeLabel]:
        return self.m_prime, self.m

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def to_frame(self) -> pd.DataFrame:
        re, im = self.values.real, self.values.imag
        return pd.DataFrame({'t': self.grid.times, 're': re, 'im': im, 'abs2': re * re + im * im})

@dataclass(eq=False)
class LeakageSeries:
    grid: TimeGrid
    amplitude: np.ndarray
    meta: Dict = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        return 1.0 - np.abs(self.amplitude)**2

    def to_frame(self) -> pd.DataFrame:
        re, im = self.amplitude.real, self.amplitude.imag
        return pd.DataFrame({'t': self.grid.times, 're': re, 'im': im, 'abs2': re * re + im * im, 'xi': self.xi})

########################################################################################### PARENT CLASS ############################################################################

class OverlapEngine(ABC):
    """Abstract base class for overlap engines; stateless, safe to share between workers."""

    engine_id = 'base'

############################################################################ EXCEPTION CLASSES  ###################################################################################

    class ResourceLimitError(Exception):
        """Exception class for evaluations whose memory or cost estimate exceeds the configured budget"""
        def __init__(self, message="Requested evaluation exceeds the resource budget", estimate=None, budget=None):
            self.message = message
            self.estimate = estimate
            self.budget = budget
            super().__init__(self.message)

    class WrongEngineError(Exception):
        """Exception class for fields outside the domain of the chosen engine"""
        def __init__(self, message="Ensemble has transverse field components, use the general engine"):
            self.message = message
            super().__init__(self.message)

    def overlap(self, ensemble: AtomicEnsemble, m_prime: DickeLabel, m: DickeLabel, grid: TimeGrid) -> OverlapSeries:
        self.check_labels(ensemble, m_prime, m)
        values = self.values(ensemble, m_prime, m, grid.times)
        meta = self.metadata(ensemble)
        meta.update(self.diagnostics(ensemble, m_prime, m, values))
        meta['labels'] = {'two_j': m.two_j, 'two_m': m.two_m, 'two_m_prime': m_prime.two_m}
        return OverlapSeries(grid=grid, values=values, m_prime=m_prime, m=m, meta=meta)

    ### Single-time re-evaluation used by bracket refinement
    def evaluate(self, ensemble: AtomicEnsemble, m_prime: DickeLabel, m: DickeLabel, t: float) -> complex:
        return complex(self.values(ensemble, m_prime, m, np.array([float(t)]))[0])

    def overlap_matrix(self, ensemble: AtomicEnsemble, labels: Sequence[DickeLabel],
                       grid: TimeGrid) -> Dict[Tuple[DickeLabel, DickeLabel], OverlapSeries]:
        return {(mp, m): self.overlap(ensemble, mp, m, grid) for mp in labels for m in labels}

    @abstractmethod
    def values(self, ensemble: AtomicEnsemble, m_prime: DickeLabel, m: DickeLabel, times: np.ndarray) -> np.ndarray:
        pass

    def diagnostics(self, ensemble, m_prime, m, values) -> Dict:
        return {}

    @staticmethod
    def check_labels(ensemble: AtomicEnsemble, *labels: DickeLabel) -> None:
        for label in labels:
            label.check_ensemble(ensemble.n_atoms)

    def metadata(self, ensemble: AtomicEnsemble) -> Dict:
        dist = ensemble.distribution
        return {'engine': self.engine_id,
                'n_atoms': ensemble.n_atoms,
                'ensemble_hash': ensemble.content_hash(),
                'ensemble_label': ensemble.label,
                'seed': ensemble.seed,
                'generator': GENERATOR_NAME if dist is not None else None,
                'distribution': dist.to_dict() if dist is not None else None,
                'mean_field': [float(v) for v in ensemble.fields.mean(axis=0)]}

################################################################################### STATEVECTOR ORACLE ###########################################################################

class StatevectorOracle(OverlapEngine):
    """Exponential-space reference: full 2^N statevector, per-atom 2x2 operators applied axis by axis."""

    engine_id = 'oracle'
    MAX_ATOMS = 22

    def guard(self, n_atoms: int) -> None:
        if n_atoms > self.MAX_ATOMS:
            raise OverlapEngine.ResourceLimitError(
                f'Statevector oracle limited to N <= {self.MAX_ATOMS}, got N = {n_atoms}',
                estimate=16 * 2**n_atoms, budget=16 * 2**self.MAX_ATOMS)

    @staticmethod
    def down_counts(n_atoms: int) -> np.ndarray:
        # bit value 1 on an atom axis means spin down
        idx = np.arange(2**n_atoms, dtype=np.int64)
        counts = np.zeros(idx.size, dtype=np.int64)
        for k in range(n_atoms):
            counts += (idx >> k) & 1
        return counts

    def dicke_vector(self, label: DickeLabel) -> np.ndarray:
        n_atoms = label.two_j
        self.guard(n_atoms)
        members = (n_atoms - self.down_counts(n_atoms)) == label.excitations
        vec = members.astype(complex)
        return vec / math.sqrt(np.count_nonzero(members))

    @staticmethod
    def apply_product(state: np.ndarray, ops: np.ndarray) -> np.ndarray:
        n_atoms = ops.shape[0]
        psi = state.reshape([2] * n_atoms)
        for k in range(n_atoms):
            psi = np.moveaxis(np.tensordot(ops[k], psi, axes=([1], [k])), 0, k)
        return psi.reshape(-1)

    def _evolved(self, ensemble, kets, times):
        mean = ensemble.fields.mean(axis=0)
        ops_t = interference_series(mean, ensemble.fields, times)
        for i in range(times.size):
            yield i, {key: self.apply_product(ket, ops_t[:, i]) for key, ket in kets.items()}

    def values(self, ensemble, m_prime, m, times):
        self.guard(ensemble.n_atoms)
        self.check_labels(ensemble, m_prime, m)
        bra = self.dicke_vector(m_prime)
        out = np.empty(times.size, dtype=complex)
        for i, evolved in self._evolved(ensemble, {m: self.dicke_vector(m)}, np.asarray(times, dtype=float)):
            out[i] = np.vdot(bra, evolved[m])
        return out

    def overlap_matrix(self, ensemble, labels, grid):
        self.guard(ensemble.n_atoms)
        self.check_labels(ensemble, *labels)
        kets = {lab: self.dicke_vector(lab) for lab in labels}
        vals = {(mp, m): np.empty(len(grid), dtype=complex) for mp in labels for m in labels}
        for i, evolved in self._evolved(ensemble, kets, grid.times):
            for (mp, m), arr in vals.items():
                arr[i] = np.vdot(kets[mp], evolved[m])

        meta = self.metadata(ensemble)
        return {(mp, m): OverlapSeries(grid=grid, values=arr, m_prime=mp, m=m,
                                       meta=dict(meta, labels={'two_j': m.two_j, 'two_m': m.two_m,
                                                               'two_m_prime': mp.two_m}))
                for (mp, m), arr in vals.items()}

    ### 1 - |<phi0(t)|phi(t)>|^2 from U0 and U directly, without the interference operators
    def leakage(self, state: SuperpositionState, ensemble: AtomicEnsemble, grid: TimeGrid) -> LeakageSeries:
        self.guard(ensemble.n_atoms)
        self.check_labels(ensemble, *state.labels)
        phi = sum(c * self.dicke_vector(lab) for lab, c in state.terms)
        mean = ensemble.fields.mean(axis=0)
        amp = np.empty(len(grid), dtype=complex)
        for i, t in enumerate(grid.times):
            u = exp_field(ensemble.fields, t)
            u0 = exp_field(np.tile(mean, (ensemble.n_atoms, 1)), t)
            amp[i] = np.vdot(self.apply_product(phi, u0), self.apply_product(phi, u))
        return LeakageSeries(grid=grid, amplitude=amp, meta=self.metadata(ensemble))

################################################################################### DEPHASING ENGINE ###########################################################################

class DephasingEngine(OverlapEngine):
    """Pure-z fields: O_MM = e_n(z_1..z_N)/C(N,n) with z_k = exp(-2i delta_k t), off-diagonals vanish."""

    engine_id = 'dephasing'

    def __init__(self, budget: float = DEFAULT_BUDGET, chunk_bytes: int = DEFAULT_CHUNK_BYTES) -> None:
        self.budget = budget
        self.chunk_bytes = chunk_bytes

    def values(self, ensemble, m_prime, m, times):
        if not ensemble.is_longitudinal:
            raise OverlapEngine.WrongEngineError(
                'Dephasing engine requires B_x = B_y = 0 for every atom; use the general engine')
        self.check_labels(ensemble, m_prime, m)
        times = np.asarray(times, dtype=float)
        if m_prime != m:
            # excitation number is conserved by pure-z fields
            return np.zeros(times.size, dtype=complex)

        n_atoms, n_up = ensemble.n_atoms, m.excitations
        flipped = n_up > n_atoms - n_up
        order = n_atoms - n_up if flipped else n_up

        estimate = float(n_atoms) * (order + 1) * times.size
        if estimate > self.budget:
            raise OverlapEngine.ResourceLimitError(
                f'Dephasing recurrence cost estimate {estimate:.3g} exceeds budget {self.budget:.3g}',
                estimate=estimate, budget=self.budget)

        bz = ensemble.fields[:, 2]
        delta = bz - bz.mean()
        total = float(delta.sum())

        out = np.empty(times.size, dtype=complex)
        chunk = max(1, int(self.chunk_bytes // (16 * 4 * (order + 1 + n_atoms))))
        for start in range(0, times.size, chunk):
            t = times[start:start + chunk]
            sign = 2j if flipped else -2j
            e_hat = self.normalized_esp(np.exp(sign * np.outer(delta, t)), order)
            # e_n(z) = prod(z) e_{N-n}(conj z) on the unit circle
            prefactor = np.exp(-1j * t * total) if flipped else np.exp(1j * t * total)
            out[start:start + chunk] = prefactor * e_hat
        return out

    ### Binomial-normalized elementary symmetric polynomial e_order(z)/C(N, order), z (N, T)
    @staticmethod
    def normalized_esp(z: np.ndarray, order: int) -> np.ndarray:
        n_atoms, n_times = z.shape
        e = np.zeros((order + 1, n_times), dtype=complex)
        e[0] = 1.0
        if order == 0:
            return e[0]
        for k in range(1, n_atoms + 1):
            lo = max(1, order - (n_atoms - k))
            hi = min(k, order)
            if lo > hi:
                continue
            mm = np.arange(lo, hi + 1, dtype=float)[:, None]
            e[lo:hi + 1] = ((k - mm) / k) * e[lo:hi + 1] + (mm / k) * z[k - 1] * e[lo - 1:hi]
        return e[order]

################################################################################### GENERAL ENGINE ###########################################################################

class GeneralEngine(OverlapEngine):
    """Any fields: coefficient [x^n y^n'] of prod_k (a_k + b_k x + c_k y + d_k xy), binomial-normalized."""

    engine_id = 'general'

    def __init__(self, budget: float = DEFAULT_BUDGET, chunk_bytes: int = DEFAULT_CHUNK_BYTES) -> None:
        self.budget = budget
        self.chunk_bytes = chunk_bytes

    ### Truncation orders after spin-flip reindexing of each variable
    @staticmethod
    def orders(n_atoms: int, m_prime: DickeLabel, m: DickeLabel) -> Tuple[int, int, bool, bool]:
        n, n_p = m.excitations, m_prime.excitations
        flip_x, flip_y = n > n_atoms - n, n_p > n_atoms - n_p
        return (n_atoms - n if flip_x else n), (n_atoms - n_p if flip_y else n_p), flip_x, flip_y

    def cost_estimate(self, n_atoms: int, m_prime: DickeLabel, m: DickeLabel, n_times: int) -> float:
        p, q, _, _ = self.orders(n_atoms, m_prime, m)
        return float(n_atoms) * (p + 1) * (q + 1) * n_times

    def values(self, ensemble, m_prime, m, times):
        self.check_labels(ensemble, m_prime, m)
        times = np.asarray(times, dtype=float)
        n_atoms = ensemble.n_atoms

        estimate = self.cost_estimate(n_atoms, m_prime, m, times.size)
        if estimate > self.budget:
            raise OverlapEngine.ResourceLimitError(
                f'General engine cost estimate {estimate:.3g} exceeds budget {self.budget:.3g}',
                estimate=estimate, budget=self.budget)

        p_order, q_order, flip_x, flip_y = self.orders(n_atoms, m_prime, m)
        mean = ensemble.fields.mean(axis=0)

        c_hat = np.empty(times.size, dtype=complex)
        chunk = max(1, int(self.chunk_bytes // (16 * 6 * (p_order + 2) * (q_order + 2))))
        for start in range(0, times.size, chunk):
            t = times[start:start + chunk]
            c_hat[start:start + chunk] = self._normalized_coefficient(
                ensemble.fields, mean, t, p_order, q_order, flip_x, flip_y)

        return self.rescale(c_hat, n_atoms, m.excitations, m_prime.excitations)

    @staticmethod
    def _normalized_coefficient(fields, mean, times, p_order, q_order, flip_x, flip_y) -> np.ndarray:
        n_atoms = fields.shape[0]
        # padded table: c[p + 1, q + 1] holds c_hat_{p,q}; row and column 0 stay zero
        c = np.zeros((p_order + 2, q_order + 2, times.size), dtype=complex)
        c[1, 1] = 1.0

        for k in range(1, n_atoms + 1):
            ops = interference_series(mean, fields[k - 1], times)
            # doubled G coefficients: 2a = O_dd, 2b = O_du, 2c = O_ud, 2d = O_uu
            a, b, cc, d = ops[:, 1, 1], ops[:, 1, 0], ops[:, 0, 1], ops[:, 0, 0]
            if flip_x:
                a, b, cc, d = b, a, d, cc
            if flip_y:
                a, b, cc, d = cc, d, a, b

            p_lo, p_hi = max(0, p_order - (n_atoms - k)), min(k, p_order)
            q_lo, q_hi = max(0, q_order - (n_atoms - k)), min(k, q_order)
            if p_lo > p_hi or q_lo > q_hi:
                continue

            p = np.arange(p_lo, p_hi + 1, dtype=float)
            q = np.arange(q_lo, q_hi + 1, dtype=float)
            wp0, wp1 = (k - p) / k, p / k
            wq0, wq1 = (k - q) / k, q / k

            rows, rows_up = slice(p_lo + 1, p_hi + 2), slice(p_lo, p_hi + 1)
            cols, cols_left = slice(q_lo + 1, q_hi + 2), slice(q_lo, q_hi + 1)

            new = np.outer(wp0, wq0)[..., None] * (a * c[rows, cols])
            new += np.outer(wp1, wq0)[..., None] * (b * c[rows_up, cols])
            new += np.outer(wp0, wq1)[..., None] * (cc * c[rows, cols_left])
            new += np.outer(wp1, wq1)[..., None] * (d * c[rows_up, cols_left])
            c[rows, cols] = new

        return c[p_order + 1, q_order + 1]

    ### O = c_hat * sqrt(C(N,n) C(N,n')), applied in log domain
    @staticmethod
    def rescale(c_hat: np.ndarray, n_atoms: int, n: int, n_prime: int) -> np.ndarray:
        log_scale = 0.5 * (log_binomial(n_atoms, n) + log_binomial(n_atoms, n_prime))
        out = np.zeros(c_hat.size, dtype=complex)
        nz = c_hat != 0
        out[nz] = np.exp(np.log(c_hat[nz]) + log_scale)
        return out

    def diagnostics(self, ensemble, m_prime, m, values):
        n_atoms = ensemble.n_atoms
        log_scale = 0.5 * (log_binomial(n_atoms, m.excitations) + log_binomial(n_atoms, m_prime.excitations))
        mags = np.abs(values)
        nz = mags > 0
        ceiling = 15.95 - 0.5 * math.log10(max(n_atoms, 1))
        if np.any(nz):
            # log10 of the smallest normalized coefficient relative to the smallest subnormal
            headroom = float(np.min(np.log10(mags[nz]) - log_scale / math.log(10))) + 323.3
            digits = max(0.0, min(ceiling, headroom))
        else:
            digits = ceiling
        return {'cost_estimate': self.cost_estimate(n_atoms, m_prime, m, values.size),
                'est_sig_digits': round(digits, 2),
                'zero_points': int(np.count_nonzero(~nz))}

############################################################################### ENGINE SELECTION ###########################################################################

ENGINE_IDS = ('oracle', 'dephasing', 'general', 'auto')

def resolve_engine_id(engine_id: str, longitudinal: bool) -> str:
    if engine_id not in ENGINE_IDS:
        raise InvalidParameterError(f'unknown engine {engine_id!r}, expected one of {ENGINE_IDS}')
    if engine_id == 'auto':
        return 'dephasing' if longitudinal else 'general'
    return engine_id

def make_engine(engine_id: str, budget: float = DEFAULT_BUDGET, ensemble: Optional[AtomicEnsemble] = None) -> OverlapEngine:
    if engine_id == 'auto':
        engine_id = resolve_engine_id('auto', ensemble is not None and ensemble.is_longitudinal)
    if engine_id == 'oracle':
        return StatevectorOracle()
    if engine_id == 'dephasing':
        return DephasingEngine(budget=budget)
    if engine_id == 'general':
        return GeneralEngine(budget=budget)
    raise InvalidParameterError(f'unknown engine {engine_id!r}')

################################################################################### LEAKAGE ###########################################################################

### A(t) = sum c*_{M'} c_M O_{M'M}(t), xi = 1 - |A|^2
def leakage(state: SuperpositionState, ensemble: AtomicEnsemble, grid: TimeGrid, engine: OverlapEngine) -> LeakageSeries:
    OverlapEngine.check_labels(ensemble, *state.labels)
    coeffs = dict(state.terms)
    series = engine.overlap_matrix(ensemble, state.labels, grid)

    amp = np.zeros(len(grid), dtype=complex)
    for (mp, m), s in series.items():
        amp += np.conj(coeffs[mp]) * coeffs[m] * s.values

    meta = engine.metadata(ensemble)
    meta['state'] = [[lab.two_j, lab.two_m, c.real, c.imag] for lab, c in state.terms]
    return LeakageSeries(grid=grid, amplitude=amp, meta=meta)
