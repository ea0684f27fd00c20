### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Series I/O: CSV series, sidecar manifests with input hashes, experiment tables and reports
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import os
import json
import hashlib
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from Ensemble_model import DickeLabel

SOFTWARE_VERSION = 'spinfade 1.0.0'
FLOAT_FORMAT = '%.17g'
TIMESTAMP_KEY = 'created_utc'

############################################################################ EXCEPTION CLASSES  #######################################################################################

class OutputError(Exception):
    """Exception class for failed writes, carrying the path that could not be written"""
    def __init__(self, message="Output could not be written", path=None):
        self.message = message
        self.path = path
        super().__init__(self.message)

### converting numpy and label values into readable JSON format
def convert_to_json(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, DickeLabel):
        return {'two_j': obj.two_j, 'two_m': obj.two_m}
    if isinstance(obj, pd.Timestamp):
        return obj.isoformat()
    raise TypeError(f"Object of type {type(obj)} is not JSON serializable")

def canonical_json(obj) -> str:
    return json.dumps(obj, default=convert_to_json, sort_keys=True, separators=(',', ':'))

### sha256 over everything in the manifest except the timestamp and the hash itself
def input_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k not in (TIMESTAMP_KEY, 'input_hash')}
    return hashlib.sha256(canonical_json(body).encode('utf-8')).hexdigest()

def build_manifest(meta: dict, config: dict = None, kind: str = 'overlap') -> dict:
    manifest = json.loads(canonical_json(meta))
    manifest['kind'] = kind
    manifest['software_version'] = SOFTWARE_VERSION
    if config is not None:
        manifest['config'] = json.loads(canonical_json(config))
    manifest['input_hash'] = input_hash(manifest)
    manifest[TIMESTAMP_KEY] = datetime.now(timezone.utc).isoformat(timespec='seconds')
    return manifest

def manifest_path(path: str) -> str:
    return os.path.splitext(path)[0] + '.manifest.json'

############################################################################ WRITERS  #######################################################################################

def _ensure_dir(path: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(folder, exist_ok=True)
    except OSError as e:
        raise OutputError(f'cannot create directory {folder}: {e.strerror}', path=folder)

def write_frame(df: pd.DataFrame, path: str) -> str:
    _ensure_dir(path)
    try:
        df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    except OSError as e:
        raise OutputError(f'cannot write {path}: {e.strerror}', path=path)
    return path

def write_json(obj, path: str) -> str:
    _ensure_dir(path)
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(obj, f, default=convert_to_json, sort_keys=True, indent=2)
            f.write('\n')
    except OSError as e:
        raise OutputError(f'cannot write {path}: {e.strerror}', path=path)
    return path

### t,re,im,abs2 at 17 significant digits plus the sidecar manifest
def emit_series(series, path: str, config: dict = None) -> str:
    write_frame(series.to_frame(), path)
    write_json(build_manifest(series.meta, config, kind='overlap'), manifest_path(path))
    return path

def emit_leakage(series, path: str, config: dict = None) -> str:
    write_frame(series.to_frame(), path)
    write_json(build_manifest(series.meta, config, kind='leakage'), manifest_path(path))
    return path

def emit_table(df: pd.DataFrame, path: str, meta: dict = None, config: dict = None, kind: str = 'table') -> str:
    write_frame(df, path)
    if meta is not None or config is not None:
        write_json(build_manifest(meta or {}, config, kind=kind), manifest_path(path))
    return path

### Experiment report: summary JSON, per-cell table and per-draw table
def emit_report(report, out_dir: str, config: dict = None) -> dict:
    name = report.name.replace('-', '_')
    cells = report.cells.drop(columns=[c for c in report.cells.columns if str(c).startswith('_')], errors='ignore')
    draws = report.draws.drop(columns=[c for c in report.draws.columns if str(c).startswith('_')], errors='ignore')
    paths = {'cells': emit_table(cells, os.path.join(out_dir, f'{name}_cells.csv')),
             'draws': emit_table(draws, os.path.join(out_dir, f'{name}_draws.csv'))}
    body = report.to_dict()
    paths['report'] = write_json(build_manifest(body, config, kind=report.name), os.path.join(out_dir, f'{name}_report.json'))
    return paths

def write_resolved_config(config, out_dir: str) -> str:
    path = os.path.join(out_dir, 'resolved_config.json')
    _ensure_dir(path)
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(config.to_json())
            f.write('\n')
    except OSError as e:
        raise OutputError(f'cannot write {path}: {e.strerror}', path=path)
    return path
