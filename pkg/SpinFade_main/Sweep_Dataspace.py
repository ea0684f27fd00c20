### SpinFade, leakage of collective spin states under inhomogeneous coupling
### Sweep cell generator: full-factorial (J, M, sigma) cells with derived labels, fields and grids
### to be expanded into per-draw parameter sets for the psweep pool
### Version: 1.0
#######################################################################################################################################################################################
#######################################################################################################################################################################################

import math
from abc import ABC, abstractmethod

import numpy as np
import pandas as pd

from Ensemble_model import DickeLabel, InvalidParameterError

GRID_SPAN = 8.0

### Seed of one (cell, draw) pair, independent of scheduling order
def derive_seed(master_seed: int, cell: int, draw: int) -> int:
    seq = np.random.SeedSequence([int(master_seed), int(cell), int(draw)])
    return int(seq.generate_state(1, dtype=np.uint64)[0])

def case_fields(case: str, b: float, sigma: float) -> dict:
    if case == 'dephasing':
        return {'mean_x': 0.0, 'mean_y': 0.0, 'mean_z': float(b),
                'sigma_x': 0.0, 'sigma_y': 0.0, 'sigma_z': float(sigma)}
    if case == 'rabi':
        return {'mean_x': float(b), 'mean_y': float(b), 'mean_z': 0.0,
                'sigma_x': float(sigma), 'sigma_y': float(sigma), 'sigma_z': 0.0}
    raise InvalidParameterError(f"case must be 'dephasing' or 'rabi', got {case!r}")

## PARENT CLASS - CELL SAMPLER
class CellSampler(ABC):

    def __init__(self, space: dict) -> None:

        self.space = space
        self.param_funs = {}
        self.notes = []

    def __call__(self) -> pd.DataFrame:

        cell_space = self.full_factorial(self.space)

        modified_space = self.apply_restrictions(cell_space)

        final_space = self.add_parameters(modified_space)

        final_space = final_space.reset_index(drop=True)
        final_space.insert(0, 'cell', np.arange(len(final_space)))

        return final_space

    @staticmethod
    def full_factorial(space: dict) -> pd.DataFrame:
        index = pd.MultiIndex.from_product([list(v) for v in space.values()], names=list(space.keys()))
        return index.to_frame(index=False)

    @abstractmethod
    def apply_restrictions(self, cell_space: pd.DataFrame) -> pd.DataFrame:
        pass

    def add_parameters(self, modified_space: pd.DataFrame) -> pd.DataFrame:

        for param, function in self.param_funs.items():
            if modified_space.empty:
                modified_space[param] = []
            else:
                modified_space[param] = modified_space.apply(lambda row: function(row), axis=1)

        return modified_space

    ### Expands every cell into draws carrying their derived seeds
    @staticmethod
    def expand_draws(cells: pd.DataFrame, draws: int, master_seed: int, **shared) -> list:
        params = []
        for record in cells.to_dict('records'):
            record = {k: (v.item() if isinstance(v, np.generic) else v) for k, v in record.items()}
            for draw in range(int(draws)):
                pset = dict(record, draw=draw, seed=derive_seed(master_seed, record['cell'], draw))
                pset.update(shared)
                params.append(pset)
        return params

####################################################################################
# # DIAGONAL HALF-LIFE CELLS #
# ##################################################################################

class DiagonalCells(CellSampler):
    """Cells over J, sigma and either explicit M ('M') or fractions of J ('m_fraction')."""

    def __init__(self, space: dict, case: str, b: float) -> None:
        super().__init__(space)

        cls = DiagonalCells
        self.case = case
        self.b = float(b)

        self.param_funs = {'J': cls.calcJ,
                           'M': cls.calcM,
                           'x': cls.calcX,
                           't_max': cls.calcTmax}

    def __call__(self) -> pd.DataFrame:
        return super().__call__()

    def apply_restrictions(self, cell_space: pd.DataFrame) -> pd.DataFrame:

        rows = []
        for i in range(cell_space.shape[0]):
            row = cell_space.loc[i]
            j = float(row['J'])
            n_atoms = int(round(2 * j))
            if n_atoms < 1:
                raise InvalidParameterError(f'J must be >= 1/2, got {j}')

            m_target = float(row['M']) if 'M' in cell_space.columns else float(row['m_fraction']) * n_atoms / 2
            label = DickeLabel.nearest(n_atoms, m_target)

            ## Keeping labels admissible for the ensemble size
            if abs(label.m - m_target) > 1e-12:
                self.notes.append(f'M in row {i} modified from {m_target} to {label.m}')

            edge = self.case == 'dephasing' and abs(label.two_m) == label.two_j
            if edge:
                self.notes.append(f'cell J={label.j}, M={label.m} has |M| = J: no dephasing decay')

            rows.append(dict(row.to_dict(), n_atoms=n_atoms, two_m=label.two_m, two_m_prime=label.two_m,
                             case=self.case, edge=edge, sigma=float(row['sigma']),
                             **case_fields(self.case, self.b, row['sigma'])))

        return pd.DataFrame(rows)

    @staticmethod
    def calcJ(row):
        return row['n_atoms'] / 2

    @staticmethod
    def calcM(row):
        return row['two_m'] / 2

    @staticmethod
    def calcX(row):
        j, m = row['n_atoms'] / 2, row['two_m'] / 2
        return math.sqrt(j) * math.sqrt(max(0.0, 1.0 - (m / j)**2))

    @staticmethod
    def calcTmax(row):
        return GRID_SPAN / (row['sigma'] * math.sqrt(row['n_atoms'] / 2))

####################################################################################
# # OFF-DIAGONAL CELLS #
# ##################################################################################

class OffDiagCells(CellSampler):
    """Rabi-case cells with M = J - 1 and M' = M - delta_m."""

    def __init__(self, space: dict, b: float) -> None:
        super().__init__(space)

        cls = OffDiagCells
        self.b = float(b)

        self.param_funs = {'J': DiagonalCells.calcJ,
                           'M': DiagonalCells.calcM,
                           'M_prime': cls.calcMprime,
                           't_max': DiagonalCells.calcTmax}

    def __call__(self) -> pd.DataFrame:
        return super().__call__()

    def apply_restrictions(self, cell_space: pd.DataFrame) -> pd.DataFrame:

        rows = []
        for i in range(cell_space.shape[0]):
            row = cell_space.loc[i]
            n_atoms = int(round(2 * float(row['J'])))
            delta_m = int(row['delta_m'])
            two_m = n_atoms - 2
            two_m_prime = two_m - 2 * delta_m

            if two_m < -n_atoms or abs(two_m_prime) > n_atoms:
                self.notes.append(f'cell J={n_atoms / 2}, delta_m={delta_m} dropped: M\' outside [-J, J]')
                continue

            rows.append(dict(row.to_dict(), n_atoms=n_atoms, two_m=two_m, two_m_prime=two_m_prime,
                             case='rabi', edge=False, sigma=float(row['sigma']),
                             # adjacent M - M' = 1 rows are reported but never fitted
                             fitted=abs(delta_m) != 1,
                             **case_fields('rabi', self.b, row['sigma'])))

        return pd.DataFrame(rows)

    @staticmethod
    def calcMprime(row):
        return row['two_m_prime'] / 2
