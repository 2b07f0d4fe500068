"""Open-loop evaluation and offline/online agreement analysis.

Offline testing replays a controller over a pre-recorded labeled
sequence and scores prediction error (MAE, RMSE).  This module also
implements the dataset-comparability matcher (best-aligned equal-length
subsequence under a mean-absolute-difference budget), the acceptability
thresholds that make offline and online verdicts comparable, Spearman
rank correlation, and the 2x2 agreement contingency table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._seeds import STREAM_MATCH_TIE, make_generator
from .controllers import Controller, LabeledSequence
from .sim import OnlineResult

TAU_OFFLINE = 0.1  # MAE below this is acceptable
EPSILON = 0.1  # mean steering difference budget for comparability
TAU_CONSIST = 0.1  # MAE difference budget for consistent verdicts


@dataclass(frozen=True)
class OfflineResult:
    mae: float
    rmse: float
    n: int
    acceptable_offline: bool
    scenario_id: Optional[str] = None


@dataclass(frozen=True)
class MatchResult:
    x: int  # start index of the matched window in the reference
    length: int
    mean_diff: float
    comparable: bool
    tie_seed: int  # seed used to break argmin ties
    tie_count: int  # number of equally good start indices


@dataclass(frozen=True)
class AgreementRecord:
    scenario_id: str
    mae: float
    mdcl: float
    acceptable_offline: bool
    acceptable_online: bool
    label: str  # "agree" or "disagree"


class EvaluationError(ValueError):
    pass


def prediction_errors(controller: Controller, seq: LabeledSequence) -> list[float]:
    """Per-step theta_hat - theta over a fresh controller session."""
    session = controller.start()
    return [session.steer(obs) - theta for obs, theta in seq.pairs]


def replay(
    controller: Controller, seq: LabeledSequence, tau_offline: Optional[float] = None
) -> OfflineResult:
    """Open-loop replay: feed recorded observations, score MAE and RMSE.

    A new session is started for the replay so latency buffers and noise
    position never leak between evaluations.
    """
    tau = TAU_OFFLINE if tau_offline is None else tau_offline
    errors = prediction_errors(controller, seq)
    n = len(errors)
    mae = math.fsum(abs(e) for e in errors) / n
    rmse = math.sqrt(math.fsum(e * e for e in errors) / n)
    return OfflineResult(
        mae=mae,
        rmse=rmse,
        n=n,
        acceptable_offline=mae < tau,
        scenario_id=seq.scenario_id,
    )


def match_subsequence(
    sim_seq: Sequence[float],
    real_seq: Sequence[float],
    epsilon: float = EPSILON,
    tie_seed: int = 0,
) -> MatchResult:
    """Best-aligned window of ``real_seq`` for ``sim_seq``.

    Scans every start index exhaustively and minimizes the mean absolute
    steering difference over a window of the simulated sequence's
    length.  Ties among minimizing start indices are broken by a seeded
    uniform choice.  The pair is comparable when the minimal mean
    difference is at most ``epsilon``.
    """
    sim = np.asarray(sim_seq, dtype=np.float64)
    real = np.asarray(real_seq, dtype=np.float64)
    if sim.ndim != 1 or real.ndim != 1:
        raise EvaluationError("steering sequences must be one-dimensional")
    if sim.size == 0:
        raise EvaluationError("simulated sequence is empty")
    if sim.size > real.size:
        raise EvaluationError(
            f"simulated sequence ({sim.size}) is longer than the reference ({real.size})"
        )
    if epsilon < 0.0:
        raise EvaluationError("epsilon must be >= 0")
    windows = np.lib.stride_tricks.sliding_window_view(real, sim.size)
    totals = np.abs(windows - sim).sum(axis=1)
    best = totals.min()
    # exact tie set: totals are sums of the same magnitudes, so equal
    # alignments produce bit-equal totals
    candidates = np.flatnonzero(totals == best)
    if candidates.size == 1:
        x = int(candidates[0])
    else:
        rng = make_generator(STREAM_MATCH_TIE, tie_seed)
        x = int(candidates[int(rng.integers(candidates.size))])
    mean_diff = float(best / sim.size)
    return MatchResult(
        x=x,
        length=int(sim.size),
        mean_diff=mean_diff,
        comparable=mean_diff <= epsilon,
        tie_seed=tie_seed,
        tie_count=int(candidates.size),
    )


def consistent(mae_sim: float, mae_real: float, tau: float = TAU_CONSIST) -> bool:
    """Whether two offline verdicts agree within the MAE-difference budget."""
    if mae_sim < 0.0 or mae_real < 0.0:
        raise EvaluationError("MAE values must be >= 0")
    return abs(mae_sim - mae_real) <= tau


def classify(offline: OfflineResult, online: OnlineResult) -> AgreementRecord:
    """Label a scenario by whether offline and online verdicts agree."""
    if (
        offline.scenario_id is not None
        and online.scenario_id is not None
        and offline.scenario_id != online.scenario_id
    ):
        raise EvaluationError(
            f"scenario mismatch: offline {offline.scenario_id!r} vs online {online.scenario_id!r}"
        )
    agree = offline.acceptable_offline == online.acceptable_online
    return AgreementRecord(
        scenario_id=offline.scenario_id or online.scenario_id or "",
        mae=offline.mae,
        mdcl=online.mdcl,
        acceptable_offline=offline.acceptable_offline,
        acceptable_online=online.acceptable_online,
        label="agree" if agree else "disagree",
    )


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        # tied block gets the average of ranks i+1 .. j+1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Spearman rank correlation with average ranks for ties.

    Returns None when either argument has zero rank variance (all values
    equal), where the coefficient is undefined.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size != y.size:
        raise EvaluationError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise EvaluationError("need at least two pairs")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    denom = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if denom == 0.0:
        return None
    return float(dx @ dy) / denom


@dataclass(frozen=True)
class ContingencyTable:
    """Scenario counts cross-classified by online and offline verdicts.

    Cell layout follows (online acceptable?, offline acceptable?):
    rows are MDCL < tau / MDCL >= tau, columns MAE < tau / MAE >= tau.
    """

    online_ok_offline_ok: int
    online_ok_offline_bad: int
    online_bad_offline_ok: int
    online_bad_offline_bad: int

    @property
    def total(self) -> int:
        return (
            self.online_ok_offline_ok
            + self.online_ok_offline_bad
            + self.online_bad_offline_ok
            + self.online_bad_offline_bad
        )

    def rows(self) -> list[list[int]]:
        return [
            [self.online_ok_offline_ok, self.online_ok_offline_bad],
            [self.online_bad_offline_ok, self.online_bad_offline_bad],
        ]


def contingency(records: Sequence[AgreementRecord]) -> ContingencyTable:
    if not records:
        raise EvaluationError("no records to tabulate")
    cells = [[0, 0], [0, 0]]
    for record in records:
        row = 0 if record.acceptable_online else 1
        col = 0 if record.acceptable_offline else 1
        cells[row][col] += 1
    return ContingencyTable(
        online_ok_offline_ok=cells[0][0],
        online_ok_offline_bad=cells[0][1],
        online_bad_offline_ok=cells[1][0],
        online_bad_offline_bad=cells[1][1],
    )
