### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Figure data study: f vs M and f vs J in the dephasing case, revival traces,
### Rabi M-profile and off-diagonal samples written as CSV for external plotting
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import os
import sys
import math
import configparser

import numpy as np

package_dir = os.path.abspath(os.path.join(os.path.dirname(os.path.abspath(__file__)), '..'))
sys.path.append(package_dir)

from Ensemble_model import AtomicEnsemble, DickeLabel, FieldDistribution, FieldVector, sample_ensemble
from Overlap_engines import DephasingEngine, GeneralEngine, TimeGrid
from Experiment_scheduling import kappa_experiment, m_profile, revival_scan
from Series_io import emit_report, emit_series, write_json
from logger import configure_logger

config = configparser.ConfigParser()
config.read(os.path.join(package_dir, 'config/spinfade_defaults.ini'))

out_dir = os.path.join(os.getcwd(), config['Paths']['out_dir'], 'figure_data')
os.makedirs(out_dir, exist_ok=True)

log = configure_logger("figure_data", out_dir)

log.info('-' * 100)
log.info('-' * 100)
log.info('Figure data study launch')
log.info('-' * 100)
log.info('-' * 100)

seed = config['Run'].getint('seed')
threads = config['Run'].getint('threads')
draws = 4

####################################################################################
# # DEPHASING: f vs M at J = 500 and f vs J at M = 0 #
# ##################################################################################

b_z, sigma_z = config['Experiment'].getfloat('b_z'), 1e-3

j_profile = 500
m_values = [f * j_profile for f in np.linspace(-1.0, 1.0, 21)]
report = m_profile(j_profile, 'dephasing', b=b_z, sigma=sigma_z, m_values=m_values,
                   draws=draws, seed=seed, threads=threads, log=log)
emit_report(report, os.path.join(out_dir, 'dephasing_f_vs_m'))

j_sweep = [25, 50, 100, 200, 400]
report = kappa_experiment(j_sweep, [0.0], [sigma_z], draws=draws, seed=seed, b_z=b_z, threads=threads, log=log)
emit_report(report, os.path.join(out_dir, 'dephasing_f_vs_j'))
log.info(f'kappa at M = 0: {report.summary["kappa"]:.6g}')

####################################################################################
# # REVIVALS: commensurate N = 10 ladder and a random N = 2 pair #
# ##################################################################################

log.info('-' * 100)
log.info('REVIVAL TRACES')

ladder = AtomicEnsemble.longitudinal(np.arange(1, 11, dtype=float))
label = DickeLabel.for_ensemble(10, 4)
grid = TimeGrid.uniform(4 * math.pi, 4096)
engine = DephasingEngine()

emit_series(engine.overlap(ladder, label, label, grid), os.path.join(out_dir, 'revival_n10_m4.csv'))
events = revival_scan(ladder, label, (0.0, 4 * math.pi), tolerance=1e-6)
log.info(f'N = 10 revivals at {events}')

pair = sample_ensemble(FieldDistribution(mean=FieldVector(0.0, 0.0, 1.0), sigma=(0.0, 0.0, 1.0), seed=seed), 2)
pair_label = DickeLabel.for_ensemble(2, 0)
gap = abs(pair.fields[0, 2] - pair.fields[1, 2]) / 2
pair_grid = TimeGrid.uniform(4 * math.pi / (2 * gap), 4096)

emit_series(engine.overlap(pair, pair_label, pair_label, pair_grid), os.path.join(out_dir, 'revival_n2.csv'))
pair_events = revival_scan(pair, pair_label, (0.0, pair_grid.t_max), tolerance=1e-6)
write_json({'n10_m4': events, 'n2': pair_events, 'n2_expected_period': math.pi / (2 * gap)},
           os.path.join(out_dir, 'revival_events.json'))

####################################################################################
# # RABI: M-profile at J = 200 and off-diagonal samples at J = 100 #
# ##################################################################################

log.info('-' * 100)
log.info('RABI PROFILE')

b_r, sigma_r = config['Experiment'].getfloat('b_r'), config['Experiment'].getfloat('sigma_r')
j_rabi = 200
report = m_profile(j_rabi, 'rabi', b=b_r, sigma=sigma_r, m_values=[f * j_rabi for f in np.linspace(-1.0, 1.0, 9)],
                   draws=draws, seed=seed, threads=threads, log=log)
emit_report(report, os.path.join(out_dir, 'rabi_f_vs_m'))
log.info(f'cubic in |M|: {report.summary.get("cubic_abs_m")}')

log.info('-' * 100)
log.info('OFF-DIAGONAL SAMPLES')

j_off, n_off = 100, 200
general = GeneralEngine()
off_grid = TimeGrid.uniform(8.0 / (sigma_r * math.sqrt(j_off)), 256)
m = DickeLabel.for_ensemble(n_off, j_off - 1)

for draw in range(3):
    dist = FieldDistribution(mean=FieldVector(b_r, b_r, 0.0), sigma=(sigma_r, sigma_r, 0.0), seed=seed + draw)
    ensemble = sample_ensemble(dist, n_off)
    for delta in (1, 2):
        m_prime = DickeLabel.for_ensemble(n_off, j_off - 1 - delta)
        series = general.overlap(ensemble, m_prime, m, off_grid)
        emit_series(series, os.path.join(out_dir, f'offdiag_j{j_off}_d{delta}_draw{draw}.csv'))

log.info('-' * 100)
log.info(f'Figure data written to {out_dir}')
log.info('-' * 100)
