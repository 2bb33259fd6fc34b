"""
Parallel ensemble runner with checkpoint/resume.

Trajectories run in a bounded process pool (serially for one worker). Each
finished trajectory is written to ``trajectories/traj_<index>.npz`` and
logged in the checkpoint; statistics are always folded from those files in
index order, so worker count and interruptions never change the result.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from tqdm import tqdm

from app.dynamics.lindblad import MAX_DIMENSION, MasterEquationRun, density_matrix, integrate_master
from app.dynamics.stochastic import StepperConfig, run_trajectory
from app.ensemble.results import SummaryRow, write_deterministic_csv, write_series_csv, write_summary
from app.ensemble.statistics import EnsembleStats, SettledMean, fold_records, settled_mean
from app.models import DuffingParams, SquidPhysicalParams, TrajectoryRecord
from app.physics.circuit import apply_scaling, squid_dimensionless
from app.physics.hilbert import FockSpace, coherent_state, populations_leakage
from app.physics.observables import ensemble_density_matrix
from app.physics.systems import SystemModel, damped_mode, default_observables, duffing_pair, squid_pair
from app.utils.checkpoint import CheckpointManager
from app.utils.run_config import SQUID_UNITS, EnsemblePoint, RunConfig, parse_quantity

logger = logging.getLogger(__name__)

CHECKPOINT_SAVE_INTERVAL = 10


class ResumeMismatchError(Exception):
    """The checkpoint in the output directory belongs to a different configuration."""
    pass


@dataclass
class PreparedEnsemble:
    """
    Everything a worker needs to run trajectories of one ensemble.

    Attributes:
        model: System model
        psi0: Initial state
        stepper: Stepper configuration (dt in model time units)
        t_span: Time span in model time units
        record_every: Steps between recorded points
        seed: Run seed
        observables: Name -> operator recorded along each trajectory
    """
    model: SystemModel
    psi0: np.ndarray
    stepper: StepperConfig
    t_span: Tuple[float, float]
    record_every: int
    seed: int
    observables: Dict[str, sp.csr_matrix]

    def run(self, index: int) -> TrajectoryRecord:
        return run_trajectory(
            self.model, self.psi0, self.stepper, self.seed, self.t_span,
            record_every=self.record_every, trajectory_index=index,
            observables=self.observables,
            keep_final_state=self.model.space.dim <= MAX_DIMENSION,
        )


# ============================================================================
# Model construction
# ============================================================================

def squid_physical(params: Dict) -> SquidPhysicalParams:
    """Physical ring parameters from config params, with the scale factors applied."""
    values = {name: parse_quantity(params[name], f"params.{name}", units) for name, units in SQUID_UNITS.items()}
    base = SquidPhysicalParams(**values)
    return apply_scaling(base, params['scale']['a'], params['scale']['b'])


def build_model(config: RunConfig, params: Dict) -> SystemModel:
    """System model for a model name and (sweep-resolved) params."""
    if config.model == 'duffing_pair':
        return duffing_pair(DuffingParams(**params), FockSpace(config.n_levels, 2))
    if config.model == 'squid_pair':
        return squid_pair(squid_physical(params), FockSpace(config.n_levels, 2), mu=params['mu'],
                          frame=config.frame)
    return damped_mode(FockSpace(config.n_levels, 1), **params)


def describe_point(config: RunConfig, point: EnsemblePoint) -> Dict[str, float]:
    """Derived parameters of one ensemble, as reported by ``validate``."""
    if config.model == 'squid_pair':
        phys = squid_physical(point.params)
        d = squid_dimensionless(phys)
        return {
            'C': phys.C, 'L': phys.L, 'R': phys.R, 'I_c': phys.I_c, 'I_d': phys.I_d,
            'beta': d.beta, 'zeta': d.zeta, 'omega': d.omega, 'phi_d': d.phi_d, 'phi_x': d.phi_x,
            'Omega': d.Omega, 'omega0': d.omega0, 'josephson_prefactor': d.josephson_prefactor,
            'mu': point.params['mu'],
        }
    return {name: float(value) for name, value in point.params.items()}


def prepare_ensemble(config: RunConfig, point: EnsemblePoint) -> PreparedEnsemble:
    model = build_model(config, point.params)
    period = model.drive_period
    return PreparedEnsemble(
        model=model,
        psi0=coherent_state(model.space, point.initial_state),
        stepper=StepperConfig(dt=config.dt * period, unravelling=config.unravelling),
        t_span=(config.t_span[0] * period, config.t_span[1] * period),
        record_every=config.record_every,
        seed=config.seed,
        observables=default_observables(model.space),
    )


def primary_observable(n_modes: int, unravelling: str) -> Tuple[str, str]:
    """(observable, units) reported in the summary table."""
    if n_modes == 2 and unravelling != 'lindblad_oracle':
        return 'entropy', 'nats'
    return 'n0', 'quanta'


# ============================================================================
# Worker process
# ============================================================================

_WORKER_ENSEMBLE: Optional[PreparedEnsemble] = None


def _init_worker(ensemble: PreparedEnsemble):
    global _WORKER_ENSEMBLE
    _WORKER_ENSEMBLE = ensemble


def _run_and_save(ensemble: PreparedEnsemble, index: int, path: Path) -> Tuple[int, bool, Optional[str]]:
    record = ensemble.run(index)
    record.save(path)
    return index, record.valid, record.abort_reason


def _worker_task(index: int, path: str) -> Tuple[int, bool, Optional[str]]:
    return _run_and_save(_WORKER_ENSEMBLE, index, Path(path))


def trajectory_path(ensemble_dir: Path, index: int) -> Path:
    return Path(ensemble_dir) / 'trajectories' / f'traj_{index:06d}.npz'


# ============================================================================
# Runner
# ============================================================================

class EnsembleRunner:
    """
    Runs every ensemble of a configuration and writes the result files.

    Attributes:
        config: Validated run configuration
        workers: Process count (<= 1 runs in-process)
        resume: Continue from the checkpoint in the run directory
        stats: Run statistics
    """

    def __init__(self, config: RunConfig, workers: int = 1, resume: bool = False, progress: bool = True):
        """
        Initialize the runner.

        Args:
            config: Validated run configuration
            workers: Maximum parallel worker processes
            resume: Reuse completed trajectories from a previous run
            progress: Show tqdm progress bars

        Raises:
            ResumeMismatchError: If resuming against a checkpoint of another configuration
        """
        self.config = config
        self.workers = max(1, int(workers))
        self.resume = resume
        self.progress = progress
        self.run_dir = config.run_dir
        self.run_dir.mkdir(parents=True, exist_ok=True)

        checkpoint_file = self.run_dir / 'checkpoint.json'
        fingerprint = config.fingerprint()
        if not resume and checkpoint_file.exists():
            checkpoint_file.unlink()
        self.checkpoint = CheckpointManager(str(checkpoint_file), fingerprint=fingerprint)
        if self.checkpoint.fingerprint != fingerprint:
            raise ResumeMismatchError(
                f"{checkpoint_file} was written by a different configuration or seed; "
                f"rerun without --resume or choose another output_dir"
            )

        self.stats = {
            'ensembles': 0,
            'trajectories_run': 0,
            'trajectories_reused': 0,
            'invalid': 0,
            'unsettled': 0,
            'total_time': 0.0,
        }

        logger.info(f"EnsembleRunner initialized: {config.name}, {self.workers} worker(s), resume={resume}")

    def run(self) -> List[SummaryRow]:
        """
        Execute all ensembles and write the summary table.

        Returns:
            Summary rows in ensemble order
        """
        start_time = time.time()
        rows = []
        with self.checkpoint:
            for point in self.config.ensemble_points():
                if self.config.unravelling == 'lindblad_oracle':
                    row = self._run_oracle(point)
                else:
                    row = self._run_ensemble(point)
                rows.append(row)
                self.stats['ensembles'] += 1

        write_summary(rows, self.run_dir / 'summary.csv')
        self.stats['total_time'] = time.time() - start_time
        logger.info(
            f"Run {self.config.name} complete: {self.stats['ensembles']} ensemble(s), "
            f"{self.stats['trajectories_run']} trajectories run, "
            f"{self.stats['trajectories_reused']} reused in {self.stats['total_time']:.1f}s"
        )
        return rows

    def ensemble_dir(self, point: EnsemblePoint) -> Path:
        return self.run_dir / 'ensembles' / point.label

    # Stochastic ensembles
    def _run_ensemble(self, point: EnsemblePoint) -> SummaryRow:
        config = self.config
        label = point.label
        ensemble_dir = self.ensemble_dir(point)

        if self.resume and self.checkpoint.is_ensemble_completed(label):
            result = self.checkpoint.get_result(label)
            if result is not None:
                logger.info(f"Ensemble {label} already complete, reusing result")
                self.stats['trajectories_reused'] += config.n_trajectories
                return SummaryRow(**result)

        self.checkpoint.mark_ensemble_started(label, config.n_trajectories)
        pending = [
            index for index in range(config.n_trajectories)
            if not (self.checkpoint.is_trajectory_completed(label, index)
                    and trajectory_path(ensemble_dir, index).exists())
        ]
        self.stats['trajectories_reused'] += config.n_trajectories - len(pending)

        ensemble = prepare_ensemble(config, point)
        logger.info(
            f"Ensemble {label}: {ensemble.model.name}, dim={ensemble.model.space.dim}, "
            f"{len(pending)}/{config.n_trajectories} trajectories to run"
        )
        self._execute(ensemble, label, ensemble_dir, pending)

        records = [TrajectoryRecord.load(trajectory_path(ensemble_dir, i)) for i in range(config.n_trajectories)]
        stats, snapshots = fold_records(records, config.transient_fraction, config.settle_tolerance)
        observable, units = primary_observable(ensemble.model.space.n_modes, config.unravelling)
        settled = self._settle(stats, snapshots, observable)
        stats.settled = settled.settled

        stats.save(ensemble_dir / 'stats.npz')
        if stats.count:
            write_series_csv(stats, ensemble_dir / 'series.csv')
        finals = [r.final_state for r in records if r.valid and r.final_state is not None]
        if finals:
            np.save(ensemble_dir / 'final_rho.npy', ensemble_density_matrix(finals))

        self.stats['invalid'] += stats.n_invalid
        if not settled.settled:
            self.stats['unsettled'] += 1
            logger.warning(
                f"Ensemble {label} not settled: mean {observable} = {settled.mean:.6g} "
                f"+/- {settled.stderr:.2g}, relative change {settled.relative_change:.3g}"
            )
        else:
            logger.info(f"Ensemble {label}: mean {observable} = {settled.mean:.6g} +/- {settled.stderr:.2g}")

        row = SummaryRow(
            series=point.series,
            sweep_parameter=point.sweep_parameter or '',
            sweep_value=point.sweep_value,
            observable=observable,
            units=units,
            mean=settled.mean,
            stderr=settled.stderr,
            settled=settled.settled,
            relative_change=settled.relative_change,
            leakage_max=stats.leakage_max,
            n_trajectories=config.n_trajectories,
            n_invalid=stats.n_invalid,
        )

        if not config.keep_trajectories:
            for index in range(config.n_trajectories):
                trajectory_path(ensemble_dir, index).unlink(missing_ok=True)

        self.checkpoint.record_result(label, asdict(row))
        self.checkpoint.mark_ensemble_completed(label)
        return row

    def _settle(self, stats: EnsembleStats, snapshots: List[EnsembleStats], observable: str) -> SettledMean:
        if stats.count == 0 or observable not in stats.window:
            return SettledMean(math.nan, math.nan, False, 0, math.nan)
        valid_snapshots = [s for s in snapshots if s.count > 0]
        if len(valid_snapshots) >= 2:
            return settled_mean(valid_snapshots, observable)
        mean, stderr = stats.window_estimate(observable)
        return SettledMean(mean, stderr, False, stats.count, math.nan)

    def _execute(self, ensemble: PreparedEnsemble, label: str, ensemble_dir: Path, pending: List[int]):
        """Run pending trajectories, serially or in a process pool."""
        if not pending:
            return
        (ensemble_dir / 'trajectories').mkdir(parents=True, exist_ok=True)
        counts = {'done': 0, 'invalid': 0}

        with tqdm(total=len(pending), desc=label[:40], unit="traj", ncols=100,
                  disable=not self.progress) as pbar:

            def completed(index: int, valid: bool, abort_reason: Optional[str]):
                self.checkpoint.mark_trajectory_completed(label, index, valid, abort_reason)
                counts['done'] += 1
                if not valid:
                    counts['invalid'] += 1
                if counts['done'] % CHECKPOINT_SAVE_INTERVAL == 0:
                    self.checkpoint.save()
                pbar.update(1)
                pbar.set_postfix({'invalid': counts['invalid']})

            if self.workers <= 1:
                for index in pending:
                    completed(*_run_and_save(ensemble, index, trajectory_path(ensemble_dir, index)))
            else:
                with ProcessPoolExecutor(max_workers=self.workers, initializer=_init_worker,
                                         initargs=(ensemble,)) as executor:
                    future_to_index = {
                        executor.submit(_worker_task, index, str(trajectory_path(ensemble_dir, index))): index
                        for index in pending
                    }
                    for future in as_completed(future_to_index):
                        index = future_to_index[future]
                        try:
                            completed(*future.result())
                        except Exception as e:
                            logger.error(f"Trajectory {index} of {label} failed: {e}")
                            self.checkpoint.save()
                            raise

        self.stats['trajectories_run'] += counts['done']
        self.checkpoint.save()

    # Master-equation oracle
    def _run_oracle(self, point: EnsemblePoint) -> SummaryRow:
        config = self.config
        ensemble = prepare_ensemble(config, point)
        model = ensemble.model
        ensemble_dir = self.ensemble_dir(point)
        ensemble_dir.mkdir(parents=True, exist_ok=True)

        result = integrate_master(MasterEquationRun(
            model=model,
            rho0=density_matrix(ensemble.psi0),
            t_span=ensemble.t_span,
            dt=ensemble.stepper.dt,
            record_every=config.record_every,
        ))
        series = result.expectations(ensemble.observables)
        write_deterministic_csv(result.times, series, ensemble_dir / 'series.csv')
        np.save(ensemble_dir / 'final_rho.npy', result.final_state)

        observable, units = primary_observable(model.space.n_modes, config.unravelling)
        values = series[observable]
        start = min(int(math.floor(config.transient_fraction * len(values))), len(values) - 1)
        leak = max(populations_leakage(np.diag(rho), model.space) for rho in result.states)

        return SummaryRow(
            series=point.series,
            sweep_parameter=point.sweep_parameter or '',
            sweep_value=point.sweep_value,
            observable=observable,
            units=units,
            mean=float(values[start:].mean()),
            stderr=0.0,
            settled=True,
            relative_change=0.0,
            leakage_max=leak,
            n_trajectories=1,
            n_invalid=0,
        )

    def get_stats(self) -> Dict:
        return dict(self.stats)

    def print_stats(self):
        """Print run statistics to console."""
        stats = self.get_stats()

        print("\n" + "=" * 70)
        print("  Ensemble Run Statistics")
        print("=" * 70)
        print(f"Ensembles:            {stats['ensembles']}")
        print(f"Trajectories run:     {stats['trajectories_run']}")
        print(f"Trajectories reused:  {stats['trajectories_reused']}")
        print(f"Invalid trajectories: {stats['invalid']}")
        print(f"Unsettled ensembles:  {stats['unsettled']}")
        print(f"Total time:           {stats['total_time']:.2f}s")
        print("=" * 70)
