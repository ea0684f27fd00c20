import json
import math

import numpy as np
import pandas as pd
import pytest

from Ensemble_model import AtomicEnsemble, DickeLabel, FieldDistribution, FieldVector, InvalidParameterError, sample_ensemble
from Overlap_engines import DephasingEngine, GeneralEngine, OverlapSeries, TimeGrid
from Experiment_scheduling import (DrawScheduling, HalfLifeResult, OffDiagScheduling, first_maximum, fit_cubic_abs,
                                   fit_power_law, fit_through_origin, half_life, kappa_experiment, m_profile,
                                   offdiag_experiment, revival_period, revival_scan, search_first_maximum,
                                   search_half_life)
from Series_io import emit_report
from Sweep_Dataspace import CellSampler, DiagonalCells, OffDiagCells, derive_seed

dephasing = DephasingEngine()


def synthetic(times, values):
    label = DickeLabel(2, 0)
    return OverlapSeries(grid=TimeGrid(np.asarray(times, dtype=float)), values=np.asarray(values, dtype=complex),
                         m_prime=label, m=label)


####################################################################################
# # HALF-LIFE #
# ##################################################################################

def test_gaussian_half_life():
    tau = 2.5
    decay = lambda t: math.exp(-(t / tau)**2)
    grid = TimeGrid.uniform(3 * tau, 301)
    result = half_life(synthetic(grid.times, np.exp(-(grid.times / tau)**2)), evaluate=decay)
    assert math.isclose(result.t_half, tau * math.sqrt(math.log(2)), rel_tol=1e-3)
    t_lo, t_hi = result.crossing_bracket
    assert t_lo < result.t_half <= t_hi
    assert t_hi - t_lo < 1e-3 * result.t_half


def test_half_life_without_refinement_interpolates():
    times = np.array([0.0, 1.0, 2.0])
    result = half_life(synthetic(times, [1.0, 0.8, 0.2]))
    assert math.isclose(result.t_half, 1.5)
    assert result.crossing_bracket == (1.0, 2.0)


def test_two_atom_half_life():
    d = 0.7
    ens = AtomicEnsemble.longitudinal([1.0 + d, 1.0 - d])
    label = DickeLabel(2, 0)
    result = search_half_life(dephasing, ens, label, TimeGrid.uniform(2.0, 200), extensions=0)
    assert math.isclose(result.t_half, math.pi / (6 * d), rel_tol=1e-3)


def test_edge_label_never_crosses():
    ens = AtomicEnsemble.longitudinal(np.random.default_rng(0).normal(size=6))
    top = DickeLabel(6, 6)
    series = dephasing.overlap(ens, top, top, TimeGrid.uniform(10.0, 64))
    with pytest.raises(DrawScheduling.NotFoundError) as err:
        half_life(series)
    assert err.value.t_searched == 10.0


def test_extension_reports_searched_range():
    ens = AtomicEnsemble.longitudinal(np.random.default_rng(0).normal(size=6))
    top = DickeLabel(6, -6)
    with pytest.raises(DrawScheduling.NotFoundError) as err:
        search_half_life(dephasing, ens, top, TimeGrid.uniform(1.0, 32), extensions=2)
    assert err.value.t_searched == 4.0


def test_half_life_scales_with_fields():
    dist = FieldDistribution(mean=FieldVector(0.0, 0.0, 1.0), sigma=(0.0, 0.0, 0.2), seed=8)
    ens = sample_ensemble(dist, 20)
    label = DickeLabel(20, 0)
    grid = TimeGrid.uniform(8.0 / (0.2 * math.sqrt(10)), 512)
    slow = search_half_life(dephasing, ens, label, grid, extensions=0)
    fast = search_half_life(dephasing, ens.scaled(2.0), label, TimeGrid(grid.times / 2.0), extensions=0)
    assert math.isclose(fast.t_half, slow.t_half / 2.0, rel_tol=1e-6)


def test_half_life_result_invariants():
    with pytest.raises(InvalidParameterError):
        HalfLifeResult(t_half=3.0, crossing_bracket=(1.0, 2.0))


####################################################################################
# # FIRST MAXIMUM #
# ##################################################################################

def test_first_maximum_refined():
    profile = lambda t: t * math.exp(-t)
    grid = TimeGrid.uniform(5.0, 51)
    t_max, o_max = first_maximum(synthetic(grid.times, grid.times * np.exp(-grid.times)), evaluate=profile)
    assert math.isclose(t_max, 1.0, rel_tol=1e-5)
    assert math.isclose(o_max, math.exp(-1), rel_tol=1e-9)


def test_homogeneous_offdiagonal_has_no_maximum():
    ens = AtomicEnsemble.homogeneous(FieldVector(0.0, 0.0, 1.0), 8)
    m, m_prime = DickeLabel(8, 6), DickeLabel(8, 2)
    with pytest.raises(DrawScheduling.NotFoundError):
        search_first_maximum(GeneralEngine(), ens, m_prime, m, TimeGrid.uniform(5.0, 64), extensions=1)


####################################################################################
# # FITS #
# ##################################################################################

def test_through_origin_exact_law():
    j = np.array([50.0, 100.0, 200.0, 50.0, 100.0, 200.0])
    m = np.array([0.0, 0.0, 0.0, 25.0, 50.0, 100.0])
    x = np.sqrt(j) * np.sqrt(1 - m**2 / j**2)
    sigma = 1e-3
    t_half = 1.0 / (1.2 * sigma * x)
    fit = fit_through_origin(x, 1.0 / (t_half * sigma))
    assert abs(fit.amplitude - 1.2) < 1e-12
    assert fit.residual < 1e-12


def test_power_law_exponent():
    x = np.array([25.0, 50.0, 100.0, 200.0])
    fit = fit_power_law(x, 0.76 * np.sqrt(x))
    assert abs(fit.exponent - 0.5) < 1e-10
    assert abs(fit.amplitude - 0.76) < 1e-10
    assert np.allclose(fit.predict(x), 0.76 * np.sqrt(x))


def test_fit_needs_three_points():
    with pytest.raises(InvalidParameterError):
        fit_power_law([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        fit_power_law([1.0, -2.0, 3.0], [1.0, 2.0, 3.0])


def test_cubic_in_abs_m():
    m = np.array([-150.0, -100.0, -50.0, 0.0, 50.0, 100.0, 150.0])
    coeffs = [2e-7, -1e-5, 3e-4, 0.8]
    f = np.polyval(coeffs, np.abs(m))
    assert np.allclose(fit_cubic_abs(m, f), coeffs, rtol=1e-6, atol=1e-12)


####################################################################################
# # REVIVALS #
# ##################################################################################

def test_commensurate_ladder_revives_at_multiples_of_pi():
    ens = AtomicEnsemble.longitudinal(np.arange(1, 11, dtype=float))
    label = DickeLabel(10, 8)
    events = revival_scan(ens, label, (0.0, 4 * math.pi), tolerance=1e-6)
    assert len(events) == 4
    assert np.allclose(events, [math.pi, 2 * math.pi, 3 * math.pi, 4 * math.pi], atol=1e-3)
    assert abs(dephasing.evaluate(ens, label, label, math.pi)) > 1 - 1e-9
    inside = dephasing.values(ens, label, label, np.linspace(0.01, math.pi - 0.01, 2000))
    assert np.min(np.abs(inside)) < 0.5


def test_two_atom_revival_period():
    ens = AtomicEnsemble.longitudinal([0.3, 1.7])
    d = 0.7
    events = revival_scan(ens, DickeLabel(2, 0), (0.0, 10.0), tolerance=1e-6)
    assert math.isclose(revival_period(events), math.pi / (2 * d), rel_tol=1e-3)


def test_large_gaussian_ensemble_never_revives():
    dist = FieldDistribution(mean=FieldVector(0.0, 0.0, 1.0), sigma=(0.0, 0.0, 1.0), seed=12)
    ens = sample_ensemble(dist, 200)
    t_half = 0.83 / math.sqrt(100)
    assert revival_scan(ens, DickeLabel(200, 0), (0.0, 100 * t_half), tolerance=1e-6, points=4096) == []


def test_revival_period_needs_events():
    with pytest.raises(DrawScheduling.NotFoundError):
        revival_period([])


####################################################################################
# # SWEEP CELLS #
# ##################################################################################

def test_diagonal_cells():
    sampler = DiagonalCells({'J': [50, 100], 'm_fraction': [0.0, 0.5, 1.0], 'sigma': [1e-3]}, case='dephasing', b=1.0)
    cells = sampler()
    assert len(cells) == 6
    assert list(cells['cell']) == list(range(6))
    row = cells[(cells['J'] == 50) & (cells['M'] == 25)].iloc[0]
    assert math.isclose(row['x'], math.sqrt(50) * math.sqrt(1 - 0.25))
    assert row['mean_z'] == 1.0 and row['sigma_z'] == 1e-3 and row['sigma_x'] == 0.0
    assert cells['edge'].sum() == 2
    assert any('no dephasing decay' in note for note in sampler.notes)


def test_offdiag_cells():
    cells = OffDiagCells({'J': [25], 'sigma': [1e-3], 'delta_m': [2, 1]}, b=10.0)()
    assert list(cells['M']) == [24.0, 24.0]
    assert list(cells['M_prime']) == [22.0, 23.0]
    assert list(cells['fitted']) == [True, False]
    assert cells['mean_x'].iloc[0] == 10.0 and cells['sigma_z'].iloc[0] == 0.0


def test_draw_seeds():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert len({derive_seed(0, c, d) for c in range(5) for d in range(5)}) == 25
    cells = pd.DataFrame({'cell': [0, 1], 'n_atoms': [4, 6]})
    params = CellSampler.expand_draws(cells, 3, 7, budget=1.0)
    assert len(params) == 6
    assert params[4] == {'cell': 1, 'n_atoms': 6, 'draw': 1, 'seed': derive_seed(7, 1, 1), 'budget': 1.0}


####################################################################################
# # SCHEDULED EXPERIMENTS #
# ##################################################################################

def small_kappa(seed):
    return kappa_experiment([5, 10, 20], [0.0], [0.1], draws=1, seed=seed, points=256)


def test_kappa_experiment_is_deterministic():
    a, b = small_kappa(3), small_kappa(3)
    assert np.array_equal(a.cells['t_half_median'].to_numpy(), b.cells['t_half_median'].to_numpy())
    assert a.summary['kappa'] == b.summary['kappa']
    assert a.summary['kappa'] > 0
    assert set(a.fits) == {'origin', 'loglog'}


def test_kappa_experiment_excludes_edges():
    report = kappa_experiment([5, 10, 20], [0.0, 1.0], [0.1], draws=1, seed=1, points=256)
    edges = report.cells[report.cells['edge']]
    assert len(edges) == 3
    assert np.all(edges['f'] == 0.0)
    assert len(report.fits['origin'].points) == 3


def test_dephasing_profile_follows_transverse_width():
    j = 200
    report = m_profile(j, 'dephasing', b=1.0, sigma=1e-3, m_values=[-j / 2, 0.0, j / 2, j], draws=16, seed=0, points=512)
    f = dict(zip(report.cells['M'], report.cells['f']))
    assert f[j] == 0.0
    assert abs(f[j / 2] / f[0.0] - math.sqrt(3) / 2) < 0.05 * math.sqrt(3) / 2
    assert abs(f[-j / 2] / f[0.0] - math.sqrt(3) / 2) < 0.05 * math.sqrt(3) / 2
    assert 1.0 <= report.summary['kappa'] <= 1.4
    assert np.allclose(report.cells['f_model'], report.summary['kappa'] * report.cells['x'])


def test_rabi_profile_fits_cubic_in_abs_m():
    j = 10
    report = m_profile(j, 'rabi', b=10.0, sigma=1e-2, m_values=[-10.0, -5.0, 0.0, 5.0, 10.0], draws=2, seed=0,
                       engine_id='general', points=256)
    assert not report.cells['edge'].any()
    assert (report.cells['f'] > 0).all()
    assert len(report.summary['cubic_abs_m']) == 4
    model = np.polyval(report.summary['cubic_abs_m'], np.abs(report.cells['M'].to_numpy(dtype=float)))
    assert np.allclose(report.cells['f_model'], model)


def fake_offdiag_run(self, pset_dict):
    # adjacent separations never peak, the fitted ones peak at O = 2/N
    if abs(pset_dict['two_m'] - pset_dict['two_m_prime']) == 2:
        return {'t_max': float('nan'), 'o_max': float('nan'), 'found': False, 't_searched': 5.0}
    return {'t_max': 1.0, 'o_max': 2.0 / pset_dict['n_atoms'], 'found': True, 't_searched': 1.0}


def test_offdiag_tolerates_missing_adjacent_maxima(monkeypatch, tmp_path):
    monkeypatch.setattr(OffDiagScheduling, 'localrun', fake_offdiag_run)
    report = offdiag_experiment([5, 10, 20], delta_m=2, draws=2, sigma_r=1e-2, seed=0)

    adjacent = report.cells[~report.cells['fitted'].astype(bool)]
    assert len(adjacent) == 3
    assert (adjacent['draws_used'] == 0).all() and adjacent['t_max_median'].isna().all()
    assert abs(report.summary['o_max_exponent'] + 1.0) < 1e-10

    paths = emit_report(report, str(tmp_path))
    with open(paths['report']) as f:
        stats = json.load(f)['stats']
    assert len(stats) == 3
    assert all(s['two_m'] - s['two_m_prime'] == 4 and len(s['per_draw']) == 2 for s in stats.values())


def test_offdiag_still_fails_when_fitted_cells_never_peak(monkeypatch):
    monkeypatch.setattr(OffDiagScheduling, 'localrun',
                        lambda self, pset: {'t_max': float('nan'), 'o_max': float('nan'), 'found': False,
                                            't_searched': 5.0})
    with pytest.raises(DrawScheduling.NotFoundError) as err:
        offdiag_experiment([5, 10], delta_m=2, draws=1, sigma_r=1e-2, include_adjacent=False)
    assert err.value.t_searched == 5.0


@pytest.mark.slow
def test_kappa_reproduction():
    report = kappa_experiment([50, 100, 200], [0.0, 0.5], [1e-4, 1e-3, 1e-2], draws=16, seed=0)
    assert 1.0 <= report.summary['kappa'] <= 1.4
    assert 0.9 <= report.summary['loglog_exponent'] <= 1.1
    assert report.summary['sigma_independent']


@pytest.mark.slow
def test_offdiag_scaling():
    report = offdiag_experiment([25, 50, 100, 200], delta_m=2, draws=8, b_r=10.0, sigma_r=[1e-3, 1e-2], seed=0)
    assert abs(report.summary['o_max_exponent'] + 1.0) <= 0.15
    assert all(v < 0.1 for v in report.summary['t_max_sigma_spread'].values())


@pytest.mark.slow
def test_rabi_profile_grows_away_from_zero():
    j = 100
    report = m_profile(j, 'rabi', b=10.0, sigma=1e-3, m_values=[0.0, 0.75 * j], draws=4, seed=0,
                       engine_id='general', points=256)
    f = dict(zip(report.cells['M'], report.cells['f']))
    assert f[0.75 * j] > f[0.0] > 0.0
