"""Monte Carlo tests of the compensator property.

M_i(t) = 1{tau_i <= t} - A_i(t ^ tau_i) must have mean zero at every t, and its
increments must be orthogonal to anything known at the earlier time.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy import stats

from ...lib.common_utils import setup_logging
from ...lib.errors import ValidationError
from ..compensators.windows import CompensatorPath

logger = setup_logging(__name__)

DEFAULT_Z_MAX = 3.5
MIN_PATHS = 1000
BONFERRONI_AFTER = 5


@dataclass
class MartingaleReport:
    """Per-row residual mean, standard error and z-score."""

    test: str
    times: List[float]
    mean: List[float]
    se: List[float]
    z: List[float]
    passed: List[bool]
    n_paths: int
    z_max: float
    z_threshold: float
    skipped_mass: float = 0.0
    inconclusive: bool = False
    labels: Optional[List[str]] = None
    notices: List[str] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(self.passed)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            't': self.times,
            'mean': self.mean,
            'se': self.se,
            'z': self.z,
            'pass': self.passed,
        })
        if self.labels is not None:
            frame.insert(0, 'bucket', self.labels)
        return frame

    def summary(self) -> Dict[str, object]:
        return {
            'test': self.test,
            'n_paths': self.n_paths,
            'z_max': self.z_max,
            'z_threshold': self.z_threshold,
            'passed': self.all_passed,
            'inconclusive': self.inconclusive,
            'skipped_mass': self.skipped_mass,
            'max_abs_z': max((abs(z) for z in self.z), default=0.0),
            'notices': list(self.notices),
        }


def widened_threshold(z_max: float, n_tests: int) -> float:
    """z_max, widened Bonferroni-style when more than a handful of rows are tested."""
    if n_tests <= BONFERRONI_AFTER:
        return z_max
    alpha = 2.0 * stats.norm.sf(z_max)
    return float(stats.norm.isf(alpha / (2.0 * n_tests / BONFERRONI_AFTER)))


def _z_scores(residuals: np.ndarray):
    """Column means, standard errors and z-scores of a (paths x columns) matrix."""
    n = residuals.shape[0]
    mean = residuals.mean(axis=0)
    se = residuals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    z = np.zeros_like(mean)
    nonzero = se > 0
    z[nonzero] = mean[nonzero] / se[nonzero]
    z[~nonzero & (mean != 0)] = np.inf
    return mean, se, z


def compensator_matrix(compensators: Sequence[CompensatorPath], times: Sequence[float]) -> np.ndarray:
    """A_i(t ^ tau_i) for each path and time."""
    return np.array([[c.value_at(t) for t in times] for c in compensators], dtype=float)


def martingale_residual_test(event_times: Sequence[float],
                             compensators: Union[np.ndarray, Sequence[CompensatorPath]],
                             times: Sequence[float], z_max: float = DEFAULT_Z_MAX,
                             min_paths: int = MIN_PATHS, skipped_mass: float = 0.0) -> MartingaleReport:
    """Test E[1{tau <= t} - A(t ^ tau)] = 0 at each t.

    Args:
        event_times: Per path, the time of the compensated event (inf when it never occurs)
        compensators: CompensatorPaths, or a (paths x times) matrix of A(t ^ tau) values
        times: Test times
        z_max: Pass threshold on |z| before widening
        min_paths: Smallest accepted number of paths
    Returns:
        MartingaleReport with one row per time
    """
    events = np.asarray(event_times, dtype=float)
    if len(events) < min_paths:
        raise ValidationError(f"martingale test needs at least {min_paths} paths, got {len(events)}")
    if not isinstance(compensators, np.ndarray):
        compensators = compensator_matrix(compensators, times)
    values = np.asarray(compensators, dtype=float)
    if values.shape != (len(events), len(times)):
        raise ValidationError(f"compensator values have shape {values.shape}, "
                              f"expected {(len(events), len(times))}")

    grid = np.asarray(times, dtype=float)
    residuals = (events[:, None] <= grid[None, :]).astype(float) - values
    mean, se, z = _z_scores(residuals)
    threshold = widened_threshold(z_max, len(grid))
    passed = [bool(abs(v) <= threshold) for v in z]

    degenerate = bool(np.all(events == events[0]) and not np.any(values))
    report = MartingaleReport('martingale_residual', grid.tolist(), mean.tolist(), se.tolist(),
                              z.tolist(), passed, len(events), z_max, threshold, skipped_mass,
                              inconclusive=degenerate)
    if degenerate:
        report.notices.append("all event times identical and A = 0; test is inconclusive")
        logger.warning(report.notices[-1])
    return report


def orthogonality_test(event_times: Sequence[float], a_s: Sequence[float], a_t: Sequence[float],
                       s: float, t: float, buckets: Sequence[object], z_max: float = DEFAULT_Z_MAX,
                       min_paths: int = MIN_PATHS) -> MartingaleReport:
    """Test E[(M_t - M_s) 1{bucket}] = 0 for each bucket of the time-s information.

    The bucket mean of the increment is tested against 0; empty buckets are
    skipped with a notice.
    """
    if not s < t:
        raise ValidationError(f"orthogonality test needs s < t, got s={s}, t={t}")
    events = np.asarray(event_times, dtype=float)
    if len(events) < min_paths:
        raise ValidationError(f"orthogonality test needs at least {min_paths} paths, got {len(events)}")

    increments = ((events <= t).astype(float) - np.asarray(a_t, dtype=float)) \
        - ((events <= s).astype(float) - np.asarray(a_s, dtype=float))
    frame = pd.DataFrame({'bucket': pd.Series(list(buckets), dtype=object).astype(str),
                          'increment': increments})

    labels, means, ses, zs = [], [], [], []
    notices = []
    for label, group in frame.groupby('bucket', sort=True):
        if len(group) < 2:
            notices.append(f"bucket '{label}' has {len(group)} path(s); skipped")
            continue
        mean, se, z = _z_scores(group[['increment']].to_numpy())
        labels.append(str(label))
        means.append(float(mean[0]))
        ses.append(float(se[0]))
        zs.append(float(z[0]))
    for notice in notices:
        logger.info(notice)

    threshold = widened_threshold(z_max, len(labels))
    passed = [bool(abs(v) <= threshold) for v in zs]
    return MartingaleReport('orthogonality', [t] * len(labels), means, ses, zs, passed, len(events),
                            z_max, threshold, labels=labels, notices=notices)
