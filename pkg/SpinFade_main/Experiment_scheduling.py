### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Experiment scheduling: half-life and first-maximum searches, power-law fits and
### Monte Carlo draw scheduling through psweep worker pools
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import psweep as ps
from scipy.optimize import minimize_scalar

from Ensemble_model import (AtomicEnsemble, DickeLabel, FieldDistribution, FieldVector,
                            InvalidParameterError, sample_ensemble)
from Overlap_engines import (DEFAULT_BUDGET, DephasingEngine, OverlapEngine, OverlapSeries,
                             TimeGrid, make_engine)
from Sweep_Dataspace import CellSampler, DiagonalCells, OffDiagCells

DEFAULT_EXTENSIONS = 4
DEPHASING_POINTS = 2048
RABI_POINTS = 256
HALF_LEVEL = 0.5
MAX_BISECTIONS = 200

############################################################################### RESULT TYPES ###############################################################################

@dataclass(frozen=True)
class HalfLifeResult:
    t_half: float
    crossing_bracket: Tuple[float, float]
    draws_used: int = 1
    spread: float = 0.0

    def __post_init__(self):
        t_lo, t_hi = self.crossing_bracket
        if not (self.t_half > 0 and t_lo < self.t_half <= t_hi):
            raise InvalidParameterError(f'half-life {self.t_half!r} outside bracket {self.crossing_bracket}')

@dataclass(frozen=True)
class PowerLawFit:
    """y = amplitude * x**exponent, residual is the RMS of the log-residuals."""
    amplitude: float
    exponent: float
    residual: float
    points: Tuple[Tuple[float, float], ...]

    def predict(self, x):
        return self.amplitude * np.asarray(x, dtype=float)**self.exponent

    def to_dict(self) -> dict:
        return {'amplitude': self.amplitude, 'exponent': self.exponent,
                'residual': self.residual, 'points': [list(p) for p in self.points]}

@dataclass(frozen=True)
class OffDiagStats:
    t_max: float
    o_max: float
    labels: Tuple[DickeLabel, DickeLabel]
    per_draw: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.o_max <= 1.0 + 1e-9 or not self.t_max > 0:
            raise InvalidParameterError(f'off-diagonal maximum out of range: t={self.t_max!r}, |O|={self.o_max!r}')

    def to_dict(self) -> dict:
        m_prime, m = self.labels
        return {'two_j': m.two_j, 'two_m': m.two_m, 'two_m_prime': m_prime.two_m, 't_max': self.t_max,
                'o_max': self.o_max, 'per_draw': [list(p) for p in self.per_draw]}

@dataclass(eq=False)
class ExperimentReport:
    name: str
    summary: Dict
    fits: Dict[str, PowerLawFit] = field(default_factory=dict)
    cells: pd.DataFrame = field(default_factory=pd.DataFrame)
    draws: pd.DataFrame = field(default_factory=pd.DataFrame)
    notes: List[str] = field(default_factory=list)
    stats: Dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {'experiment': self.name, 'summary': self.summary,
                'fits': {k: v.to_dict() for k, v in self.fits.items()}, 'notes': list(self.notes),
                'stats': {str(k): v.to_dict() for k, v in self.stats.items()}}

########################################################################################### PARENT CLASS ############################################################################

class DrawScheduling(ABC):
    """Abstract base class for Monte Carlo draw scheduling over sweep cells."""

############################################################################ EXCEPTION CLASSES  ###################################################################################

    class NotFoundError(Exception):
        """Exception class for searches that found no crossing or maximum inside the searched range"""
        def __init__(self, message="No crossing or maximum found within the searched time range", t_searched=None):
            self.message = message
            self.t_searched = t_searched
            super().__init__(self.message)

    ### Attributes are plain values so bound localrun methods pickle into the pool
    def __init__(self, engine_id='auto', budget=DEFAULT_BUDGET, points=None, extensions=DEFAULT_EXTENSIONS, **kwargs):

        self.engine_id = engine_id
        self.budget = float(budget)
        self.points = points
        self.extensions = int(extensions)

        for key, value in kwargs.items():
            setattr(self, key, value)

    @staticmethod
    def ensemble_from(pset_dict) -> AtomicEnsemble:
        mean = FieldVector(pset_dict['mean_x'], pset_dict['mean_y'], pset_dict['mean_z'])
        sigma = (pset_dict['sigma_x'], pset_dict['sigma_y'], pset_dict['sigma_z'])
        dist = FieldDistribution(mean=mean, sigma=sigma, seed=pset_dict['seed'])
        return sample_ensemble(dist, pset_dict['n_atoms'])

    def grid_for(self, pset_dict) -> TimeGrid:
        points = self.points or (DEPHASING_POINTS if pset_dict['case'] == 'dephasing' else RABI_POINTS)
        return TimeGrid.uniform(pset_dict['t_max'], points)

    # Local run abstract method to enforce on child class
    @abstractmethod
    def localrun(self, pset_dict) -> dict:
        pass

    ### Running every (cell, draw) pset through psweep, merged by (cell, draw) not completion order
    def schedule(self, cells: pd.DataFrame, draws: int, seed: int, threads: int = 1, log=None) -> pd.DataFrame:

        log = log or logging.getLogger('spinfade')
        params = CellSampler.expand_draws(cells, draws, seed)
        log.info(f'{type(self).__name__}: {len(cells)} cells x {draws} draws on {threads} worker(s)')

        if not params:
            return pd.DataFrame()

        df = run_pool(self.localrun, params, threads)
        return df.sort_values(['cell', 'draw']).reset_index(drop=True)

def run_pool(worker: Callable, params: List[dict], threads: int = 1) -> pd.DataFrame:
    poolsize = int(threads) if threads and int(threads) > 1 else None
    return ps.run_local(worker, params, poolsize=poolsize, save=False)

####################################################################################
# # HALF-LIFE DRAWS #
# ##################################################################################

class HalfLifeScheduling(DrawScheduling):

    def __init__(self, **kwargs):
        super().__init__(**kwargs)

    def localrun(self, pset_dict) -> dict:

        log = logging.getLogger('spinfade')

        ### Exception return, to guarantee correct psweep completion
        not_found = {'t_half': float('nan'), 't_lo': float('nan'), 't_hi': float('nan'),
                     'found': False, 't_searched': 0.0}

        if pset_dict.get('edge'):
            return not_found

        ensemble = self.ensemble_from(pset_dict)
        engine = make_engine(self.engine_id, budget=self.budget, ensemble=ensemble)
        label = DickeLabel(pset_dict['n_atoms'], pset_dict['two_m'])

        try:
            result = search_half_life(engine, ensemble, label, self.grid_for(pset_dict), self.extensions)
        except DrawScheduling.NotFoundError as e:
            log.info(f"cell {pset_dict['cell']} draw {pset_dict['draw']}: {e.message} (t <= {e.t_searched:.6g})")
            return dict(not_found, t_searched=e.t_searched)

        t_lo, t_hi = result.crossing_bracket
        return {'t_half': result.t_half, 't_lo': t_lo, 't_hi': t_hi, 'found': True, 't_searched': t_hi}

####################################################################################
# # OFF-DIAGONAL DRAWS #
# ##################################################################################

class OffDiagScheduling(DrawScheduling):

    def __init__(self, **kwargs):
        super().__init__(**kwargs)

    def localrun(self, pset_dict) -> dict:

        log = logging.getLogger('spinfade')

        not_found = {'t_max': float('nan'), 'o_max': float('nan'), 'found': False, 't_searched': 0.0}

        ensemble = self.ensemble_from(pset_dict)
        engine = make_engine(self.engine_id, budget=self.budget, ensemble=ensemble)
        m = DickeLabel(pset_dict['n_atoms'], pset_dict['two_m'])
        m_prime = DickeLabel(pset_dict['n_atoms'], pset_dict['two_m_prime'])

        try:
            t_max, o_max = search_first_maximum(engine, ensemble, m_prime, m, self.grid_for(pset_dict), self.extensions)
        except DrawScheduling.NotFoundError as e:
            log.info(f"cell {pset_dict['cell']} draw {pset_dict['draw']}: {e.message} (t <= {e.t_searched:.6g})")
            return dict(not_found, t_searched=e.t_searched)

        return {'t_max': t_max, 'o_max': o_max, 'found': True, 't_searched': t_max}

############################################################################## SERIES SEARCHES ##############################################################################

### First downward 1/2-crossing, bisected with the engine until the bracket is below rel_tol * t_half
def half_life(series: OverlapSeries, evaluate: Optional[Callable[[float], complex]] = None,
              rel_tol: float = 1e-3, level: float = HALF_LEVEL) -> HalfLifeResult:

    t = series.grid.times
    mag = series.magnitude

    if mag[0] <= level:
        raise InvalidParameterError(f'series must start above |O| = {level}, got {mag[0]!r}')

    below = np.nonzero(mag <= level)[0]
    if below.size == 0:
        raise DrawScheduling.NotFoundError(t_searched=float(t[-1]))

    i = int(below[0])
    t_lo, t_hi = float(t[i - 1]), float(t[i])
    a_lo, a_hi = float(mag[i - 1]), float(mag[i])

    if evaluate is not None:
        for _ in range(MAX_BISECTIONS):
            if t_hi - t_lo < rel_tol * t_lo:
                break
            mid = 0.5 * (t_lo + t_hi)
            a_mid = abs(evaluate(mid))
            if a_mid > level:
                t_lo, a_lo = mid, a_mid
            else:
                t_hi, a_hi = mid, a_mid

    t_half = t_lo + (a_lo - level) * (t_hi - t_lo) / (a_lo - a_hi)
    return HalfLifeResult(t_half=t_half, crossing_bracket=(t_lo, t_hi))

### First grid point whose neighbours are both lower and whose value reaches prominence * max|O| on the grid,
### refined with a bounded scalar search. Earlier local maxima below that level are skipped, so t_max is the
### first prominent maximum; prominence=0 gives the first strict local maximum
def first_maximum(series: OverlapSeries, evaluate: Optional[Callable[[float], complex]] = None,
                  rel_tol: float = 1e-9, prominence: float = 0.5) -> Tuple[float, float]:

    t = series.grid.times
    mag = series.magnitude

    if t.size < 3 or not np.max(mag) > 0.0:
        raise DrawScheduling.NotFoundError(t_searched=float(t[-1]))

    peak = (mag[1:-1] > mag[:-2]) & (mag[1:-1] > mag[2:]) & (mag[1:-1] >= prominence * np.max(mag))
    interior = np.nonzero(peak)[0]
    if interior.size == 0:
        raise DrawScheduling.NotFoundError(t_searched=float(t[-1]))

    i = int(interior[0]) + 1
    t_best, o_best = float(t[i]), float(mag[i])

    if evaluate is not None:
        res = minimize_scalar(lambda s: -abs(evaluate(s)), bounds=(float(t[i - 1]), float(t[i + 1])),
                              method='bounded', options={'xatol': rel_tol * float(t[i])})
        if -res.fun > o_best:
            t_best, o_best = float(res.x), float(-res.fun)

    return t_best, min(o_best, 1.0)

### Repeats a grid search on a grid doubled in length until found or out of extensions
def _search_extending(search, engine: OverlapEngine, ensemble: AtomicEnsemble, m_prime: DickeLabel,
                      m: DickeLabel, grid: TimeGrid, extensions: int):

    log = logging.getLogger('spinfade')
    evaluate = lambda s: engine.evaluate(ensemble, m_prime, m, s)

    for attempt in range(extensions + 1):
        series = engine.overlap(ensemble, m_prime, m, grid)
        try:
            return search(series, evaluate)
        except DrawScheduling.NotFoundError:
            if attempt == extensions:
                raise DrawScheduling.NotFoundError(t_searched=grid.t_max)
            grid = grid.extended(2.0)
            log.info(f'grid extended to t_max = {grid.t_max:.6g} (extension {attempt + 1} of {extensions})')

def search_half_life(engine, ensemble, label, grid, extensions=DEFAULT_EXTENSIONS) -> HalfLifeResult:
    return _search_extending(half_life, engine, ensemble, label, label, grid, extensions)

def search_first_maximum(engine, ensemble, m_prime, m, grid, extensions=DEFAULT_EXTENSIONS) -> Tuple[float, float]:
    return _search_extending(first_maximum, engine, ensemble, m_prime, m, grid, extensions)

################################################################################### FITS ###################################################################################

def _fit_points(x, y, min_points):
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise InvalidParameterError(f'x and y lengths differ: {x.size} vs {y.size}')
    if x.size < min_points:
        raise InvalidParameterError(f'fit needs at least {min_points} points, got {x.size}')
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidParameterError('fit points must be finite')
    return x, y

def _log_rms(x, y, amplitude, exponent) -> float:
    return float(np.sqrt(np.mean((np.log(y) - np.log(amplitude) - exponent * np.log(x))**2)))

### Free power law, least squares on ln y = ln a + p ln x
def fit_power_law(x, y) -> PowerLawFit:
    x, y = _fit_points(x, y, 3)
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidParameterError('power-law fit needs positive x and y')

    exponent, log_amplitude = np.polyfit(np.log(x), np.log(y), 1)
    amplitude, exponent = float(np.exp(log_amplitude)), float(exponent)

    return PowerLawFit(amplitude=amplitude, exponent=exponent, residual=_log_rms(x, y, amplitude, exponent),
                       points=tuple(zip(x.tolist(), y.tolist())))

### y = a x with no intercept
def fit_through_origin(x, y) -> PowerLawFit:
    x, y = _fit_points(x, y, 3)
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidParameterError('through-origin fit needs positive x and y')

    amplitude = float(np.dot(x, y) / np.dot(x, x))

    return PowerLawFit(amplitude=amplitude, exponent=1.0, residual=_log_rms(x, y, amplitude, 1.0),
                       points=tuple(zip(x.tolist(), y.tolist())))

### Cubic in |x|, highest power first
def fit_cubic_abs(x, y) -> np.ndarray:
    x, y = _fit_points(x, y, 4)
    return np.polyfit(np.abs(x), y, 3)

##################################################################################### AGGREGATION ####################################################################################

### Per-cell median and IQR over found draws
def aggregate(draws: pd.DataFrame, cells: pd.DataFrame, value: str) -> pd.DataFrame:

    rows = []
    for _, cell in cells.iterrows():
        sub = draws[draws['cell'] == cell['cell']]
        found = sub[sub['found'].astype(bool)][value].to_numpy(dtype=float)
        if found.size:
            q25, med, q75 = np.percentile(found, [25, 50, 75])
        else:
            q25 = med = q75 = float('nan')
        rows.append({'cell': int(cell['cell']), f'{value}_median': float(med),
                     f'{value}_iqr': float(q75 - q25), 'draws_used': int(found.size), 'draws': int(len(sub))})

    return cells.merge(pd.DataFrame(rows), on='cell', how='left')

def add_rates(table: pd.DataFrame) -> pd.DataFrame:
    table = table.copy()
    table['f'] = 1.0 / (table['t_half_median'] * table['sigma'])
    # no decay at |M| = J
    table.loc[table['edge'].astype(bool), 'f'] = 0.0
    return table

def _resolve_log(log):
    return log or logging.getLogger('spinfade')

### Cells that should decay but never did after every extension
def require_found(table: pd.DataFrame, draws: pd.DataFrame) -> None:
    missing = table[~table['edge'].astype(bool) & (table['draws_used'] == 0)]
    if missing.empty:
        return
    cells = missing['cell'].tolist()
    t_searched = float(draws[draws['cell'].isin(cells)]['t_searched'].max())
    raise DrawScheduling.NotFoundError(message=f'No draw of cell(s) {cells} reached the target within the searched range',
                                       t_searched=t_searched)

############################################################################## EXPERIMENTS ##############################################################################

def kappa_experiment(j_values: Sequence[float], m_fractions: Sequence[float], sigma_values: Sequence[float],
                     draws: int = 16, seed: int = 0, b_z: float = 1.0, points: Optional[int] = None,
                     engine_id: str = 'dephasing', budget: float = DEFAULT_BUDGET, threads: int = 1,
                     log=None) -> ExperimentReport:

    log = _resolve_log(log)
    log.info('-' * 100)
    log.info('KAPPA EXPERIMENT: dephasing half-lives over (J, M, sigma_z)')
    log.info('-' * 100)

    sampler = DiagonalCells({'J': list(j_values), 'm_fraction': list(m_fractions), 'sigma': list(sigma_values)},
                            case='dephasing', b=b_z)
    cells = sampler()
    for note in sampler.notes:
        log.info(note)

    scheduler = HalfLifeScheduling(engine_id=engine_id, budget=budget, points=points)
    draw_df = scheduler.schedule(cells, draws, seed, threads, log)
    table = add_rates(aggregate(draw_df, cells, 't_half'))
    require_found(table, draw_df)

    fitted = table[~table['edge'].astype(bool) & (table['draws_used'] > 0)]
    notes = list(sampler.notes)
    excluded = table[table['edge'].astype(bool)]
    notes += [f'cell J={r.J}, M={r.M} excluded from fit: no decay' for r in excluded.itertuples()]

    log.info('-' * 100)
    log.info('FIT')
    origin = fit_through_origin(fitted['x'], fitted['f'])
    loglog = fit_power_law(fitted['x'], fitted['f'])
    slope, intercept = np.polyfit(fitted['x'].to_numpy(dtype=float), fitted['f'].to_numpy(dtype=float), 1)

    spread = {}
    for (j, m), group in fitted.groupby(['J', 'M']):
        f = group['f'].to_numpy(dtype=float)
        spread[f'J={j:g},M={m:g}'] = float((f.max() - f.min()) / np.median(f))
    sigma_independent = bool(all(v < 0.1 for v in spread.values())) if spread else True

    log.info(f'kappa = {origin.amplitude:.6g}, log-log slope = {loglog.exponent:.6g}, sigma-independent: {sigma_independent}')

    summary = {'kappa': origin.amplitude, 'loglog_exponent': loglog.exponent,
               'free_intercept': {'slope': float(slope), 'intercept': float(intercept)},
               'sigma_spread': spread, 'sigma_independent': sigma_independent,
               'draws': int(draws), 'seed': int(seed), 'b_z': float(b_z)}

    return ExperimentReport('fit-kappa', summary, {'origin': origin, 'loglog': loglog}, table, draw_df, notes)

def rabi_experiment(j_values: Sequence[float], b_r: float = 10.0, sigma_r: float = 1e-3, draws: int = 8,
                    seed: int = 0, points: Optional[int] = None, engine_id: str = 'general',
                    budget: float = DEFAULT_BUDGET, threads: int = 1, log=None) -> ExperimentReport:

    log = _resolve_log(log)
    log.info('-' * 100)
    log.info('RABI EXPERIMENT: M = 0 half-lives over J')
    log.info('-' * 100)

    sampler = DiagonalCells({'J': list(j_values), 'M': [0.0], 'sigma': [float(sigma_r)]}, case='rabi', b=b_r)
    cells = sampler()

    scheduler = HalfLifeScheduling(engine_id=engine_id, budget=budget, points=points)
    draw_df = scheduler.schedule(cells, draws, seed, threads, log)
    table = add_rates(aggregate(draw_df, cells, 't_half'))
    require_found(table, draw_df)
    fitted = table[table['draws_used'] > 0]

    sqrt_j = np.sqrt(fitted['J'].to_numpy(dtype=float))
    origin = fit_through_origin(sqrt_j, fitted['f'])
    loglog = fit_power_law(fitted['J'], fitted['f'])
    log.info(f'kappa_1 = {origin.amplitude:.6g}, exponent of f vs J = {loglog.exponent:.6g}')

    summary = {'kappa1': origin.amplitude, 'exponent': loglog.exponent, 'b_r': float(b_r),
               'sigma_r': float(sigma_r), 'draws': int(draws), 'seed': int(seed)}

    return ExperimentReport('fit-rabi', summary, {'origin': origin, 'loglog': loglog}, table, draw_df, sampler.notes)

def m_profile(j: float, case: str, b: float, sigma: float, m_values: Sequence[float], draws: int = 16,
              seed: int = 0, points: Optional[int] = None, engine_id: str = 'auto',
              budget: float = DEFAULT_BUDGET, threads: int = 1, log=None) -> ExperimentReport:

    log = _resolve_log(log)
    log.info('-' * 100)
    log.info(f'M PROFILE: {case} case at J = {j}')
    log.info('-' * 100)

    sampler = DiagonalCells({'J': [float(j)], 'M': list(m_values), 'sigma': [float(sigma)]}, case=case, b=b)
    cells = sampler()

    scheduler = HalfLifeScheduling(engine_id=engine_id, budget=budget, points=points)
    draw_df = scheduler.schedule(cells, draws, seed, threads, log)
    table = add_rates(aggregate(draw_df, cells, 't_half'))
    require_found(table, draw_df)

    summary = {'case': case, 'J': float(j), 'b': float(b), 'sigma': float(sigma), 'draws': int(draws), 'seed': int(seed)}
    fits = {}
    usable = table[(table['f'] > 0) & np.isfinite(table['f'])]

    if case == 'dephasing':
        if len(usable) >= 3:
            fits['origin'] = fit_through_origin(usable['x'], usable['f'])
            table['f_model'] = fits['origin'].amplitude * table['x']
            summary['kappa'] = fits['origin'].amplitude
    else:
        if len(usable) >= 4:
            coeffs = fit_cubic_abs(usable['M'], usable['f'])
            table['f_model'] = np.polyval(coeffs, np.abs(table['M'].to_numpy(dtype=float)))
            summary['cubic_abs_m'] = [float(c) for c in coeffs]

    return ExperimentReport('m-profile', summary, fits, table, draw_df, sampler.notes)

def offdiag_experiment(j_values: Sequence[float], delta_m: int = 2, draws: int = 8, b_r: float = 10.0,
                       sigma_r=1e-3, seed: int = 0, include_adjacent: bool = True, points: Optional[int] = None,
                       engine_id: str = 'general', budget: float = DEFAULT_BUDGET, threads: int = 1,
                       log=None) -> ExperimentReport:

    log = _resolve_log(log)
    log.info('-' * 100)
    log.info(f'OFF-DIAGONAL EXPERIMENT: M = J - 1, M - M\' = {delta_m}')
    log.info('-' * 100)

    sigma_values = [float(s) for s in np.atleast_1d(sigma_r)]
    deltas = [int(delta_m)] + ([1] if include_adjacent and int(delta_m) != 1 else [])
    sampler = OffDiagCells({'J': list(j_values), 'sigma': sigma_values, 'delta_m': deltas}, b=b_r)
    cells = sampler()

    scheduler = OffDiagScheduling(engine_id=engine_id, budget=budget, points=points)
    draw_df = scheduler.schedule(cells, draws, seed, threads, log)
    table = aggregate(draw_df, cells, 't_max')
    table = table.merge(aggregate(draw_df, cells, 'o_max')[['cell', 'o_max_median', 'o_max_iqr']], on='cell')
    table['t_max_sigma'] = table['t_max_median'] * table['sigma']
    # adjacent rows are raw output, a missing maximum there is NaN not a failure
    require_found(table[table['fitted'].astype(bool)], draw_df)

    stats = {}
    for r in table.itertuples():
        if r.draws_used == 0:
            continue
        sub = draw_df[(draw_df['cell'] == r.cell) & draw_df['found'].astype(bool)]
        stats[r.cell] = OffDiagStats(t_max=float(r.t_max_median), o_max=float(r.o_max_median),
                                     labels=(DickeLabel(r.n_atoms, r.two_m_prime), DickeLabel(r.n_atoms, r.two_m)),
                                     per_draw=tuple(zip(sub['t_max'].tolist(), sub['o_max'].tolist())))

    fits = {}
    summary = {'delta_m': int(delta_m), 'b_r': float(b_r), 'sigma_r': sigma_values,
               'draws': int(draws), 'seed': int(seed)}

    ## Fit only the requested separation at the smallest sigma
    fitted = table[(table['delta_m'] == int(delta_m)) & table['fitted'].astype(bool)
                   & (table['sigma'] == sigma_values[0]) & (table['draws_used'] > 0)]
    if len(fitted) >= 3:
        fits['o_max'] = fit_power_law(fitted['J'], fitted['o_max_median'])
        summary['o_max_exponent'] = fits['o_max'].exponent
        log.info(f'O_max exponent vs J = {fits["o_max"].exponent:.6g}')

    if len(sigma_values) > 1:
        spread = {}
        for j, group in table[table['delta_m'] == int(delta_m)].groupby('J'):
            v = group['t_max_sigma'].to_numpy(dtype=float)
            v = v[np.isfinite(v)]
            if v.size > 1:
                spread[f'J={j:g}'] = float((v.max() - v.min()) / np.median(v))
        summary['t_max_sigma_spread'] = spread

    return ExperimentReport('offdiag', summary, fits, table, draw_df, sampler.notes, stats)

### Times where |O_MM| >= 1 - tolerance, clustered into events closer than two grid spacings
def revival_scan(ensemble: AtomicEnsemble, m: DickeLabel, t_range: Tuple[float, float], tolerance: float = 1e-6,
                 points: int = 8192, engine: Optional[OverlapEngine] = None) -> List[float]:

    engine = engine or DephasingEngine()
    t0, t1 = float(t_range[0]), float(t_range[1])
    if not t1 > t0:
        raise InvalidParameterError(f'revival range must be increasing, got {t_range}')

    grid = TimeGrid.uniform(t1, points, t0)
    series = engine.overlap(ensemble, m, m, grid)
    t, mag = grid.times, series.magnitude
    dt = grid.spacing
    evaluate = lambda s: abs(engine.evaluate(ensemble, m, m, s))

    padded = np.concatenate(([-np.inf], mag, [-np.inf]))
    peaks = np.nonzero((padded[1:-1] >= padded[:-2]) & (padded[1:-1] >= padded[2:]))[0]

    candidates = []
    for i in peaks:
        if mag[i] < 1.0 - max(100 * tolerance, 0.05):
            continue
        lo, hi = float(t[max(i - 1, 0)]), float(t[min(i + 1, len(t) - 1)])
        t_best, o_best = float(t[i]), float(mag[i])
        if hi > lo:
            res = minimize_scalar(lambda s: -evaluate(s), bounds=(lo, hi), method='bounded',
                                  options={'xatol': 1e-10 * max(hi, 1.0)})
            if -res.fun > o_best:
                t_best, o_best = float(res.x), float(-res.fun)
        # t = 0 is the trivial initial overlap
        if o_best >= 1.0 - tolerance and t_best > dt:
            candidates.append(t_best)

    events = []
    for tc in sorted(candidates):
        if events and tc - events[-1][-1] < 2 * dt:
            events[-1].append(tc)
        else:
            events.append([tc])

    return [float(np.median(e)) for e in events]

def revival_period(times: Sequence[float]) -> float:
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise DrawScheduling.NotFoundError(message='No revival events to derive a period from', t_searched=0.0)
    if times.size == 1:
        return float(times[0])
    return float(np.median(np.diff(times)))
