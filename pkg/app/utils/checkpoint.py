"""
Trajectory-level checkpointing for ensemble runs.

One JSON document per run directory records, for every sweep point, which
trajectory indices have a record on disk, which of them aborted, and the
summary row once the ensemble is folded. The document carries a
fingerprint of the run configuration so a resume can refuse foreign state.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = '2.0'


def _now() -> str:
    return datetime.now().isoformat()


class CheckpointManager:
    """
    Persistent progress of the ensembles of one run.

    Example:
        >>> with CheckpointManager("output/sweep/checkpoint.json", fingerprint="ab12") as ckpt:
        ...     ckpt.mark_ensemble_started("C=1e-15", n_trajectories=100)
        ...     ckpt.mark_trajectory_completed("C=1e-15", 0)
    """

    def __init__(self, checkpoint_file: str, fingerprint: Optional[str] = None):
        """
        Args:
            checkpoint_file: JSON file inside the run directory
            fingerprint: Configuration hash written into a fresh checkpoint;
                an existing file keeps the hash it was created with
        """
        self.checkpoint_file = Path(checkpoint_file)
        self.checkpoint_file.parent.mkdir(parents=True, exist_ok=True)
        self.checkpoint = self._read_or_create(fingerprint)

    def _read_or_create(self, fingerprint: Optional[str]) -> Dict:
        if not self.checkpoint_file.exists():
            return self._fresh(fingerprint)
        try:
            data = json.loads(self.checkpoint_file.read_text(encoding='utf-8'))
        except (OSError, ValueError) as e:
            # An unreadable file is treated as no progress.
            logger.warning(f"Ignoring unreadable checkpoint {self.checkpoint_file}: {e}")
            return self._fresh(fingerprint)

        done = sum(len(e['completed']) for e in data['ensembles'].values())
        logger.info(f"Checkpoint found: {done} trajectories on record across {len(data['ensembles'])} sweep point(s)")
        return data

    @staticmethod
    def _fresh(fingerprint: Optional[str]) -> Dict:
        stamp = _now()
        return {
            'metadata': {
                'version': CHECKPOINT_VERSION,
                'fingerprint': fingerprint,
                'created_at': stamp,
                'last_updated': stamp,
            },
            'ensembles': {},
            'statistics': {
                'total_trajectories_completed': 0,
                'total_trajectories_invalid': 0,
                'total_ensembles_completed': 0,
            },
        }

    @property
    def fingerprint(self) -> Optional[str]:
        return self.checkpoint['metadata'].get('fingerprint')

    def save(self):
        """Write atomically (temp file, then rename)."""
        self.checkpoint['metadata']['last_updated'] = _now()
        staging = self.checkpoint_file.with_suffix('.tmp')
        staging.write_text(json.dumps(self.checkpoint, indent=2), encoding='utf-8')
        staging.replace(self.checkpoint_file)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.save()
        return False

    # ------------------------------------------------------------------
    # Sweep points
    # ------------------------------------------------------------------

    def _entry(self, label: str) -> Dict:
        return self.checkpoint['ensembles'][label]

    def mark_ensemble_started(self, label: str, n_trajectories: int):
        """Register a sweep point; progress already recorded for it is kept."""
        if label in self.checkpoint['ensembles']:
            return
        self.checkpoint['ensembles'][label] = {
            'n_trajectories': int(n_trajectories),
            'completed': [],
            'invalid': {},
            'finished': False,
            'started_at': _now(),
        }
        self.save()

    def record_result(self, label: str, result: Dict):
        """Attach the folded summary row to a sweep point."""
        self._entry(label)['result'] = result

    def get_result(self, label: str) -> Optional[Dict]:
        return self.checkpoint['ensembles'].get(label, {}).get('result')

    def mark_ensemble_completed(self, label: str):
        entry = self._entry(label)
        if entry['finished']:
            return
        entry['finished'] = True
        entry['completed_at'] = _now()
        self.checkpoint['statistics']['total_ensembles_completed'] += 1
        logger.info(f"Sweep point finished: {label}")
        self.save()

    def is_ensemble_completed(self, label: str) -> bool:
        return self.checkpoint['ensembles'].get(label, {}).get('finished', False)

    # ------------------------------------------------------------------
    # Trajectories
    # ------------------------------------------------------------------

    def mark_trajectory_completed(self, label: str, index: int, valid: bool = True,
                                  abort_reason: Optional[str] = None):
        """
        Record that trajectory ``index`` of ``label`` has its record on disk.

        Args:
            label: Sweep point label
            index: Trajectory index
            valid: False for an aborted trajectory
            abort_reason: Why it aborted (norm loss, leakage, non-finite state)
        """
        entry = self._entry(label)
        if index in entry['completed']:
            return
        entry['completed'].append(int(index))
        stats = self.checkpoint['statistics']
        stats['total_trajectories_completed'] += 1
        if not valid:
            entry['invalid'][str(index)] = abort_reason or 'aborted'
            stats['total_trajectories_invalid'] += 1
            logger.debug(f"{label}: trajectory {index} aborted ({abort_reason})")

    def is_trajectory_completed(self, label: str, index: int) -> bool:
        return index in self.checkpoint['ensembles'].get(label, {}).get('completed', ())
