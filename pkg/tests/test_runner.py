"""
Tests for the ensemble runner: determinism, resume and result files.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from app.ensemble.results import EmptySummaryError, SummaryRow, emit_plot, read_series_csv, read_summary
from app.ensemble.runner import (
    EnsembleRunner,
    ResumeMismatchError,
    describe_point,
    prepare_ensemble,
    primary_observable,
    trajectory_path,
)
from app.utils.checkpoint import CheckpointManager
from app.utils.run_config import parse_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


def single_mode_document(**overrides):
    document = {
        'name': 'tiny',
        'model': 'single_mode_test',
        'unravelling': 'qsd',
        'params': {'zeta': 0.1, 'drive_amplitude': 0.2},
        'n_levels': 10,
        'dt': 0.001,
        't_span': [0, 0.5],
        'record_every': 50,
        'n_trajectories': 8,
        'seed': 42,
        'initial_state': [0.5],
    }
    document.update(overrides)
    return document


def make_config(tmp_path, subdir='out', seed=None, **overrides):
    return parse_config(single_mode_document(**overrides), default_output_dir=str(tmp_path / subdir),
                        seed_override=seed)


def read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


# ============================================================================
# 1. ENSEMBLE PREPARATION
# ============================================================================

class TestPreparation:
    """Model construction and unit conversion."""

    def test_times_in_drive_periods(self, tmp_path):
        config = make_config(tmp_path)
        ensemble = prepare_ensemble(config, config.ensemble_points()[0])
        assert ensemble.stepper.dt == pytest.approx(0.001 * 2 * math.pi)
        assert ensemble.t_span == pytest.approx((0.0, math.pi))
        assert np.linalg.norm(ensemble.psi0) == pytest.approx(1.0)

    def test_primary_observable(self):
        assert primary_observable(2, 'qsd') == ('entropy', 'nats')
        assert primary_observable(2, 'jumps') == ('entropy', 'nats')
        assert primary_observable(2, 'lindblad_oracle') == ('n0', 'quanta')
        assert primary_observable(1, 'qsd') == ('n0', 'quanta')

    def test_describe_squid_point(self, tmp_path):
        with open(CONFIG_DIR / 'squid_capacitance_sweep.json', encoding='utf-8') as f:
            document = json.load(f)
        config = parse_config(document, default_output_dir=str(tmp_path))
        first, second = config.ensemble_points()[:2]
        d1, d2 = describe_point(config, first), describe_point(config, second)
        assert d1['zeta'] == pytest.approx(d2['zeta'], rel=1e-9)
        assert d1['beta'] == pytest.approx(2.0, rel=1e-3)
        assert d1['C'] == pytest.approx(1e-16)
        assert d2['C'] == pytest.approx(1e-15)
        assert d2['Omega'] == pytest.approx(d1['Omega'] / 10 ** 0.25, rel=1e-9)
        assert d1['Omega'] == pytest.approx(1.3, rel=0.02)


# ============================================================================
# 2. RUNS
# ============================================================================

class TestEnsembleRunner:
    """End-to-end ensemble runs on a small single-mode model."""

    def test_run_writes_result_files(self, tmp_path):
        config = make_config(tmp_path)
        runner = EnsembleRunner(config, progress=False)
        rows = runner.run()

        assert len(rows) == 1
        row = rows[0]
        assert row.observable == 'n0'
        assert row.units == 'quanta'
        assert row.n_trajectories == 8
        assert row.n_invalid == 0
        assert math.isfinite(row.mean) and row.mean > 0

        ensemble_dir = config.run_dir / 'ensembles' / 'tiny'
        assert (config.run_dir / 'summary.csv').exists()
        assert (ensemble_dir / 'stats.npz').exists()
        assert (ensemble_dir / 'final_rho.npy').exists()
        series = read_series_csv(ensemble_dir / 'series.csv')
        assert set(series) == {'x0', 'p0', 'n0'}
        assert len(series['n0']['time']) == 11
        assert np.all(series['n0']['count'] == 8)
        assert read_summary(config.run_dir / 'summary.csv') == rows

        stats = runner.get_stats()
        assert stats['ensembles'] == 1
        assert stats['trajectories_run'] == 8

    def test_same_seed_is_byte_identical(self, tmp_path):
        first = make_config(tmp_path, 'a')
        second = make_config(tmp_path, 'b')
        EnsembleRunner(first, progress=False).run()
        EnsembleRunner(second, progress=False).run()
        assert read_bytes(first.run_dir / 'summary.csv') == read_bytes(second.run_dir / 'summary.csv')

    def test_worker_count_does_not_change_results(self, tmp_path):
        serial = make_config(tmp_path, 'serial')
        parallel = make_config(tmp_path, 'parallel')
        EnsembleRunner(serial, workers=1, progress=False).run()
        EnsembleRunner(parallel, workers=2, progress=False).run()
        assert read_bytes(serial.run_dir / 'summary.csv') == read_bytes(parallel.run_dir / 'summary.csv')
        relative = 'ensembles/tiny/series.csv'
        assert read_bytes(serial.run_dir / relative) == read_bytes(parallel.run_dir / relative)

    def test_different_seed_changes_results(self, tmp_path):
        first = make_config(tmp_path, 'a')
        second = make_config(tmp_path, 'b', seed=43)
        EnsembleRunner(first, progress=False).run()
        EnsembleRunner(second, progress=False).run()
        assert read_bytes(first.run_dir / 'summary.csv') != read_bytes(second.run_dir / 'summary.csv')

    def test_single_trajectory_is_unsettled(self, tmp_path):
        config = make_config(tmp_path, n_trajectories=1)
        (row,) = EnsembleRunner(config, progress=False).run()
        assert not row.settled

    def test_discarding_trajectories(self, tmp_path):
        config = make_config(tmp_path, keep_trajectories=False)
        EnsembleRunner(config, progress=False).run()
        ensemble_dir = config.run_dir / 'ensembles' / 'tiny'
        assert not trajectory_path(ensemble_dir, 0).exists()
        assert (ensemble_dir / 'series.csv').exists()

    def test_sweep_rows_in_order(self, tmp_path):
        config = make_config(tmp_path, n_trajectories=2,
                             sweep={'path': 'params.drive_amplitude', 'values': [0.1, 0.3]})
        rows = EnsembleRunner(config, progress=False).run()
        assert [row.sweep_value for row in rows] == [0.1, 0.3]
        assert all(row.sweep_parameter == 'params.drive_amplitude' for row in rows)

    def test_two_mode_summary_reports_entropy(self, tmp_path):
        config = parse_config({
            'name': 'pair', 'model': 'duffing_pair', 'params': {'beta': 2.0},
            'n_levels': 6, 'dt': 0.001, 't_span': [0, 0.1], 'record_every': 5,
            'n_trajectories': 2, 'seed': 3,
        }, default_output_dir=str(tmp_path))
        (row,) = EnsembleRunner(config, progress=False).run()
        assert row.observable == 'entropy'
        assert row.units == 'nats'
        assert row.n_trajectories == 2


class TestResume:
    """Checkpoint/resume."""

    def test_interrupted_run_resumes_to_identical_results(self, tmp_path):
        reference = make_config(tmp_path, 'reference')
        EnsembleRunner(reference, progress=False).run()

        config = make_config(tmp_path, 'interrupted')
        EnsembleRunner(config, progress=False).run()

        # Roll the checkpoint back to "two trajectories done"
        checkpoint_file = config.run_dir / 'checkpoint.json'
        with open(checkpoint_file, encoding='utf-8') as f:
            checkpoint = json.load(f)
        ensemble = checkpoint['ensembles']['tiny']
        ensemble['finished'] = False
        ensemble['completed'] = [0, 1]
        ensemble.pop('result')
        with open(checkpoint_file, 'w', encoding='utf-8') as f:
            json.dump(checkpoint, f)
        for index in range(2, 8):
            trajectory_path(config.run_dir / 'ensembles' / 'tiny', index).unlink()
        (config.run_dir / 'summary.csv').unlink()

        runner = EnsembleRunner(config, resume=True, progress=False)
        runner.run()
        assert runner.get_stats()['trajectories_reused'] == 2
        assert runner.get_stats()['trajectories_run'] == 6
        assert read_bytes(config.run_dir / 'summary.csv') == read_bytes(reference.run_dir / 'summary.csv')

    def test_completed_run_is_reused(self, tmp_path):
        config = make_config(tmp_path)
        rows = EnsembleRunner(config, progress=False).run()
        runner = EnsembleRunner(config, resume=True, progress=False)
        assert runner.run() == rows
        assert runner.get_stats()['trajectories_run'] == 0

    def test_resume_with_other_seed_rejected(self, tmp_path):
        EnsembleRunner(make_config(tmp_path), progress=False).run()
        with pytest.raises(ResumeMismatchError):
            EnsembleRunner(make_config(tmp_path, seed=7), resume=True, progress=False)

    def test_fresh_run_replaces_checkpoint(self, tmp_path):
        EnsembleRunner(make_config(tmp_path), progress=False).run()
        runner = EnsembleRunner(make_config(tmp_path, seed=7), progress=False)
        runner.run()
        assert runner.get_stats()['trajectories_run'] == 8

    def test_progress_monitor_reads_checkpoint(self, tmp_path, capsys):
        from scripts.monitor_ensemble import display_progress, load_checkpoint

        config = make_config(tmp_path)
        assert load_checkpoint(config.run_dir) is None
        EnsembleRunner(config, progress=False).run()
        display_progress(load_checkpoint(config.run_dir))
        out = capsys.readouterr().out
        assert 'Trajectories completed: 8' in out
        assert 'mean n0 =' in out

    def test_progress_monitor_tallies_abort_reasons(self, capsys):
        from scripts.monitor_ensemble import display_progress

        display_progress({
            'statistics': {'total_trajectories_completed': 3, 'total_trajectories_invalid': 2},
            'ensembles': {'beta=0.5': {
                'n_trajectories': 4, 'completed': [0, 1, 2], 'finished': False,
                'invalid': {'1': 'leakage', '2': 'leakage'},
            }},
        })
        out = capsys.readouterr().out
        assert '3/4' in out
        assert '2  leakage' in out

    def test_unreadable_checkpoint_starts_empty(self, tmp_path):
        path = tmp_path / 'checkpoint.json'
        path.write_text('{truncated', encoding='utf-8')
        manager = CheckpointManager(str(path), fingerprint='abc')
        assert manager.fingerprint == 'abc'
        assert not manager.is_trajectory_completed('tiny', 0)


# ============================================================================
# 3. ORACLE RUNS
# ============================================================================

class TestOracleRun:
    """Master-equation runs through the same runner."""

    def test_oracle_row(self, tmp_path):
        config = make_config(tmp_path, unravelling='lindblad_oracle', n_trajectories=1)
        (row,) = EnsembleRunner(config, progress=False).run()
        assert row.settled
        assert row.stderr == 0.0
        assert row.observable == 'n0'
        series = read_series_csv(config.run_dir / 'ensembles' / 'tiny' / 'series.csv')
        assert series['n0']['value'][0] == pytest.approx(0.25, abs=1e-9)

    @pytest.mark.slow
    def test_oracle_agrees_with_trajectory_mean(self, tmp_path):
        oracle = make_config(tmp_path, 'oracle', unravelling='lindblad_oracle', t_span=[0, 1], record_every=100)
        ensemble = make_config(tmp_path, 'qsd', n_trajectories=100, t_span=[0, 1], record_every=100)
        EnsembleRunner(oracle, progress=False).run()
        EnsembleRunner(ensemble, progress=False).run()
        exact = read_series_csv(oracle.run_dir / 'ensembles' / 'tiny' / 'series.csv')['n0']
        sampled = read_series_csv(ensemble.run_dir / 'ensembles' / 'tiny' / 'series.csv')['n0']
        np.testing.assert_allclose(sampled['time'], exact['time'], rtol=1e-12)
        deviation = np.abs(sampled['value'] - exact['value'])
        assert np.all(deviation <= 5 * sampled['stderr'] + 0.02)


# ============================================================================
# 4. PLOTS
# ============================================================================

class TestEmitPlot:
    """Plot data and script generation."""

    def make_row(self, x, series='qsd'):
        return SummaryRow(series=series, sweep_parameter='capacitance', sweep_value=x, observable='entropy',
                          units='nats', mean=0.3, stderr=0.01, settled=True, relative_change=0.001,
                          leakage_max=1e-6, n_trajectories=16, n_invalid=0)

    def test_single_point(self, tmp_path):
        paths = emit_plot([self.make_row(1e-13)], tmp_path)
        assert paths['data'].exists()
        assert paths['script'].exists()
        script = paths['script'].read_text(encoding='utf-8')
        assert 'matplotlib' in script
        assert 'LOG_X = False' in script

    def test_capacitance_decades_use_log_axis(self, tmp_path):
        paths = emit_plot([self.make_row(1e-15), self.make_row(1e-13)], tmp_path)
        script = paths['script'].read_text(encoding='utf-8')
        assert 'LOG_X = True' in script
        assert 'quantum limit is on the left hand side' in script

    def test_empty_summary(self, tmp_path):
        with pytest.raises(EmptySummaryError):
            emit_plot([], tmp_path)

    def test_chaotic_and_entrained_series(self, tmp_path):
        rows = [
            SummaryRow(series=branch, sweep_parameter='params.beta', sweep_value=beta, observable='entropy',
                       units='nats', mean=mean, stderr=0.02, settled=True, relative_change=0.001,
                       leakage_max=1e-6, n_trajectories=64, n_invalid=0)
            for branch, means in (('chaotic', (0.9, 0.6, 0.3)), ('entrained', (0.2, 0.15, 0.1)))
            for beta, mean in zip((1.0, 0.5, 0.25), means)
        ]
        paths = emit_plot(rows, tmp_path, render=True)

        with open(paths['data'], encoding='utf-8', newline='') as f:
            data = list(csv.DictReader(f))
        assert [row['series'] for row in data] == ['chaotic'] * 3 + ['entrained'] * 3
        assert [float(row['x']) for row in data if row['series'] == 'entrained'] == [1.0, 0.5, 0.25]
        assert float(data[0]['mean']) == 0.9

        script = paths['script'].read_text(encoding='utf-8')
        assert 'LOG_X = False' in script
        assert 'ax.legend()' in script
        assert paths['image'].stat().st_size > 0

    def test_render_png(self, tmp_path):
        paths = emit_plot([self.make_row(1e-15), self.make_row(1e-13, series='jumps')], tmp_path, render=True)
        assert paths['image'].exists()
        assert paths['image'].stat().st_size > 0


# ============================================================================
# TEST CONFIGURATION
# ============================================================================

if __name__ == '__main__':
    pytest.main([__file__, '-v', '--tb=short'])
