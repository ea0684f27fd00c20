### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Main run script: argparse front end dispatching run configs to engines and experiments,
### mapping failures onto exit codes with JSON diagnostics on standard error
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import os
import sys
import json
import argparse

import numpy as np
import pandas as pd

from Ensemble_model import (AtomicEnsemble, DickeLabel, FieldDistribution, FieldVector,
                            InvalidParameterError, SuperpositionState, decompose, sample_ensemble)
from Overlap_engines import (ENGINE_IDS, DephasingEngine, GeneralEngine, OverlapEngine, StatevectorOracle,
                             TimeGrid, leakage, make_engine)
from Experiment_scheduling import (DrawScheduling, kappa_experiment, m_profile, offdiag_experiment,
                                   rabi_experiment, revival_period, revival_scan, search_half_life)
from Run_config import COMMANDS, ConfigError, RunConfig, load_config, read_defaults
from Series_io import (OutputError, build_manifest, emit_leakage, emit_report, emit_series, emit_table,
                       write_json, write_resolved_config)
from logger import set_log

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_VALIDATION = 2
EXIT_RESOURCE = 3
EXIT_NOT_FOUND = 4
EXIT_IO = 5

SELFTEST_TOLERANCE = 1e-10

############################################################################## BUILDERS ##############################################################################

def build_ensemble(config: RunConfig) -> AtomicEnsemble:
    if config.fields is not None:
        return AtomicEnsemble(np.array(config.fields, dtype=float), label='explicit')
    dist = FieldDistribution(mean=FieldVector(*config.mean), sigma=tuple(config.sigma), seed=config.seed)
    return sample_ensemble(dist, config.n_atoms)

def build_grid(config: RunConfig) -> TimeGrid:
    if config.times is not None:
        return TimeGrid(np.array(config.times, dtype=float))
    return TimeGrid.uniform(config.t_max, config.points, config.t_min)

def build_state(config: RunConfig, n_atoms: int) -> SuperpositionState:
    return SuperpositionState(tuple((DickeLabel.for_ensemble(n_atoms, m), complex(re, im)) for m, re, im in config.state))

def experiment_engine(config: RunConfig, transverse: bool) -> str:
    if config.engine != 'auto':
        return config.engine
    return 'general' if transverse else 'dephasing'

############################################################################## COMMANDS ##############################################################################

def cmd_sample(config, log):
    ensemble = build_ensemble(config)
    mean, fluct = decompose(ensemble)
    norms = np.linalg.norm(fluct, axis=1)
    table = pd.DataFrame({'k': np.arange(ensemble.n_atoms), 'bx': ensemble.fields[:, 0],
                          'by': ensemble.fields[:, 1], 'bz': ensemble.fields[:, 2], 'fluctuation': norms})
    meta = {'n_atoms': ensemble.n_atoms, 'mean_field': mean.as_array(), 'ensemble_hash': ensemble.content_hash(),
            'fluctuation_rms': float(np.sqrt(np.mean(norms**2))), 'fluctuation_max': float(norms.max()),
            'distribution': ensemble.distribution.to_dict() if ensemble.distribution else None}
    log.info(f'sampled N = {ensemble.n_atoms}, mean field {mean.as_array()}, rms fluctuation {meta["fluctuation_rms"]:.6g}')
    emit_table(table, os.path.join(config.out_dir, 'sample.csv'), meta=meta, config=config.to_dict(), kind='sample')
    return EXIT_OK

def cmd_overlap(config, log):
    ensemble = build_ensemble(config)
    engine = make_engine(config.engine, budget=config.budget, ensemble=ensemble)
    m = DickeLabel.for_ensemble(ensemble.n_atoms, config.m)
    m_prime = DickeLabel.for_ensemble(ensemble.n_atoms, config.m_prime)
    log.info(f'overlap with {engine.engine_id} engine, N = {ensemble.n_atoms}, M = {m.m}, M\' = {m_prime.m}')

    series = engine.overlap(ensemble, m_prime, m, build_grid(config))
    emit_series(series, os.path.join(config.out_dir, 'overlap.csv'), config.to_dict())
    return EXIT_OK

def cmd_leakage(config, log):
    ensemble = build_ensemble(config)
    engine = make_engine(config.engine, budget=config.budget, ensemble=ensemble)
    state = build_state(config, ensemble.n_atoms)
    log.info(f'leakage with {engine.engine_id} engine over {len(state.terms)} terms')

    series = leakage(state, ensemble, build_grid(config), engine)
    emit_leakage(series, os.path.join(config.out_dir, 'leakage.csv'), config.to_dict())
    return EXIT_OK

def cmd_halflife(config, log):
    ensemble = build_ensemble(config)
    engine = make_engine(config.engine, budget=config.budget, ensemble=ensemble)
    label = DickeLabel.for_ensemble(ensemble.n_atoms, config.m)

    log.info('-' * 100)
    log.info('HALF-LIFE SEARCH')
    result = search_half_life(engine, ensemble, label, build_grid(config))
    log.info(f't_half = {result.t_half:.12g} in bracket {result.crossing_bracket}')

    meta = engine.metadata(ensemble)
    meta.update({'t_half': result.t_half, 'crossing_bracket': list(result.crossing_bracket),
                 'labels': {'two_j': label.two_j, 'two_m': label.two_m}})
    write_json(build_manifest(meta, config.to_dict(), kind='halflife'), os.path.join(config.out_dir, 'halflife.json'))
    return EXIT_OK

def cmd_fit_kappa(config, log):
    report = kappa_experiment(config.j_values, config.m_fractions, config.sigma_values, draws=config.draws,
                              seed=config.seed, b_z=config.b_z, points=config.points,
                              engine_id=experiment_engine(config, False), budget=config.budget,
                              threads=config.resolved_threads(), log=log)
    emit_report(report, config.out_dir, config.to_dict())
    return EXIT_OK

def cmd_fit_rabi(config, log):
    report = rabi_experiment(config.j_values, b_r=config.b_r, sigma_r=config.sigma_r, draws=config.draws,
                             seed=config.seed, points=config.points, engine_id=experiment_engine(config, True),
                             budget=config.budget, threads=config.resolved_threads(), log=log)
    emit_report(report, config.out_dir, config.to_dict())
    return EXIT_OK

def cmd_m_profile(config, log):
    rabi = config.case == 'rabi'
    report = m_profile(config.j, config.case, b=config.b_r if rabi else config.b_z,
                       sigma=config.sigma_r if rabi else config.sigma_values[0], m_values=config.m_values,
                       draws=config.draws, seed=config.seed, points=config.points,
                       engine_id=experiment_engine(config, rabi), budget=config.budget,
                       threads=config.resolved_threads(), log=log)
    emit_report(report, config.out_dir, config.to_dict())
    return EXIT_OK

def cmd_offdiag(config, log):
    report = offdiag_experiment(config.j_values, delta_m=config.delta_m, draws=config.draws, b_r=config.b_r,
                                sigma_r=config.sigma_r, seed=config.seed, include_adjacent=config.include_adjacent,
                                points=config.points, engine_id=experiment_engine(config, True),
                                budget=config.budget, threads=config.resolved_threads(), log=log)
    emit_report(report, config.out_dir, config.to_dict())
    return EXIT_OK

def cmd_revival(config, log):
    ensemble = build_ensemble(config)
    engine = DephasingEngine(budget=config.budget)
    label = DickeLabel.for_ensemble(ensemble.n_atoms, config.m)
    t_range = (config.t_min, config.t_max)

    events = revival_scan(ensemble, label, t_range, tolerance=config.tolerance, points=config.points, engine=engine)
    log.info(f'{len(events)} revival event(s) in [{t_range[0]:.6g}, {t_range[1]:.6g}]')

    trace = engine.overlap(ensemble, label, label, TimeGrid.uniform(config.t_max, config.points, config.t_min))
    emit_series(trace, os.path.join(config.out_dir, 'revival_trace.csv'), config.to_dict())

    meta = engine.metadata(ensemble)
    meta.update({'revival_times': events, 'period': revival_period(events) if events else None,
                 'tolerance': config.tolerance})
    write_json(build_manifest(meta, config.to_dict(), kind='revival'), os.path.join(config.out_dir, 'revival.json'))
    return EXIT_OK

### Cross-checks the recurrence engines against the statevector oracle on random ensembles
def run_selftest(seed: int = 0, ensembles: int = 50, points: int = 16, max_atoms: int = 12, log=None) -> dict:

    rng = np.random.Generator(np.random.PCG64(seed))
    oracle, general, dephasing = StatevectorOracle(), GeneralEngine(), DephasingEngine()
    worst = {'general': 0.0, 'dephasing': 0.0}

    for i in range(ensembles):
        n_atoms = int(rng.integers(2, max_atoms + 1))
        fields = rng.normal(size=3) + 0.5 * rng.normal(size=(n_atoms, 3))
        grid = TimeGrid.uniform(3.0, points)
        labels = [DickeLabel.from_excitations(n_atoms, k) for k in range(n_atoms + 1)]

        for name, engine, ensemble in (('general', general, AtomicEnsemble(fields, label='selftest')),
                                       ('dephasing', dephasing, AtomicEnsemble.longitudinal(fields[:, 2]))):
            reference = oracle.overlap_matrix(ensemble, labels, grid)
            for (mp, m), series in reference.items():
                dev = float(np.max(np.abs(engine.values(ensemble, mp, m, grid.times) - series.values)))
                worst[name] = max(worst[name], dev)

        if log is not None:
            log.info(f'selftest ensemble {i}: N = {n_atoms}, worst so far {worst}')

    return {'max_deviation': worst, 'tolerance': SELFTEST_TOLERANCE, 'ensembles': ensembles,
            'passed': all(v <= SELFTEST_TOLERANCE for v in worst.values())}

def cmd_selftest(config, log):
    log.info('-' * 100)
    log.info('SELFTEST')
    result = run_selftest(seed=config.seed, log=log)
    write_json(result, os.path.join(config.out_dir, 'selftest.json'))
    log.info(f"selftest {'passed' if result['passed'] else 'FAILED'}: {result['max_deviation']}")
    return EXIT_OK if result['passed'] else EXIT_SELFTEST

COMMAND_TABLE = {'sample': cmd_sample, 'overlap': cmd_overlap, 'leakage': cmd_leakage, 'halflife': cmd_halflife,
                 'fit-kappa': cmd_fit_kappa, 'fit-rabi': cmd_fit_rabi, 'm-profile': cmd_m_profile,
                 'offdiag': cmd_offdiag, 'revival': cmd_revival, 'selftest': cmd_selftest}

############################################################################## RUN ##############################################################################

def report_error(exit_code: int, error: Exception, stream=None, **extra) -> int:
    stream = stream or sys.stderr
    body = {'status': 'error', 'exit_code': exit_code, 'error': type(error).__name__,
            'message': getattr(error, 'message', str(error))}
    body.update({k: v for k, v in extra.items() if v is not None})
    stream.write(json.dumps(body, sort_keys=True) + '\n')
    return exit_code

def run(config: RunConfig, stderr=None) -> int:

    log_name = read_defaults()['Paths'].get('log_name', 'spinfade')
    try:
        os.makedirs(config.out_dir, exist_ok=True)
        log = set_log(os.path.join(config.out_dir, f'{log_name}_output.txt'))
    except OSError as e:
        return report_error(EXIT_IO, e, stderr, path=config.out_dir)

    log.info('-' * 100)
    log.info(f'SpinFade {config.command}: seed {config.seed}, engine {config.engine}, out {config.out_dir}')
    log.info('-' * 100)

    try:
        status = COMMAND_TABLE[config.command](config, log)
        write_resolved_config(config, config.out_dir)
    except (ConfigError, InvalidParameterError, OverlapEngine.WrongEngineError) as e:
        log.info(f'Validation error: {e}')
        return report_error(EXIT_VALIDATION, e, stderr, key=getattr(e, 'key', None))
    except OverlapEngine.ResourceLimitError as e:
        log.info(f'Resource limit: {e}')
        return report_error(EXIT_RESOURCE, e, stderr, estimate=e.estimate, budget=e.budget)
    except DrawScheduling.NotFoundError as e:
        log.info(f'Not found: {e}')
        return report_error(EXIT_NOT_FOUND, e, stderr, t_searched=e.t_searched)
    except OutputError as e:
        log.info(f'I/O error: {e}')
        return report_error(EXIT_IO, e, stderr, path=e.path)

    if status == EXIT_SELFTEST:
        report_error(EXIT_SELFTEST, Exception('Selftest deviation above tolerance'), stderr)
    log.info(f'{config.command} finished with exit code {status}')
    return status

def main(argv=None) -> int:
    ### Argument parser, the command may also come from the config
    parser = argparse.ArgumentParser(prog='spinfade',
                                     description='Decay of collective spin overlaps under inhomogeneous fields')
    parser.add_argument("command", nargs='?', choices=COMMANDS)
    parser.add_argument("--config", type=str, help="JSON run config, '-' reads standard input")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", type=str)
    parser.add_argument("--engine", choices=ENGINE_IDS)
    parser.add_argument("--threads", type=int, help="worker processes, 0 = one per physical core")

    args = parser.parse_args(argv)

    try:
        if args.config == '-':
            text = getattr(sys.stdin, 'buffer', sys.stdin).read()
        elif args.config:
            with open(args.config, 'rb') as f:
                text = f.read()
        else:
            text = '{}'
    except OSError as e:
        return report_error(EXIT_IO, e, path=args.config)

    try:
        config = load_config(text, command=args.command, seed=args.seed, out=args.out,
                             engine=args.engine, threads=args.threads)
    except ConfigError as e:
        return report_error(EXIT_VALIDATION, e, key=e.key, line=e.line, col=e.col)

    return run(config)

if __name__ == "__main__":
    sys.exit(main())
