"""Comparison models: zero-improvement baseline, per-series fixed-effects
regression, and an exponential moving average with a shared decay tuned
ex post on the evaluation protocol itself."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError
from .transform import ImprovementSample, ModelForm


def ols_qr(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares via QR (robust on near-collinear small-t regressors).

    Returns (coefficients, residual variance with ddof = n - p); residual
    variance is 0.0 when the fit is saturated.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Q, R = np.linalg.qr(X)
    coef = np.linalg.solve(R, Q.T @ y)
    dof = len(y) - X.shape[1]
    if dof <= 0:
        return coef, 0.0
    resid = y - X @ coef
    return coef, float(resid @ resid / dof)


def zero_baseline(series_id: str = "", t: int = 0) -> float:
    """Always predict zero improvement (zero relative improvement for
    speedruns, zero log-odds improvement for ml benchmarks)."""
    return 0.0


@dataclass(frozen=True)
class FixedEffectsEntry:
    series_id: str
    a: float
    b: float
    residual_variance: float
    n_obs: int


def fit_fixed_effects(
    samples: Sequence[ImprovementSample],
    model_form: ModelForm,
    up_to_t: int | None = None,
) -> FixedEffectsEntry:
    """OLS of one series' responses on its regressors, rows with t < up_to_t.

    Refit as up_to_t advances; the caller supplies samples of one series
    (with regressors already matching ``model_form``).
    """
    rows = [s for s in samples if up_to_t is None or s.t < up_to_t]
    if len(rows) < 2:
        raise InsufficientDataError(
            f"fixed-effects fit needs >= 2 rows, got {len(rows)}"
        )
    sid = rows[0].series_id
    X = np.column_stack([np.ones(len(rows)), [s.regressor for s in rows]])
    y = np.array([s.response for s in rows])
    coef, resid_var = ols_qr(X, y)
    return FixedEffectsEntry(sid, float(coef[0]), float(coef[1]), resid_var, len(rows))


@dataclass(frozen=True)
class EmaConfig:
    decay: float
    shared_across_groups: bool = True

    def __post_init__(self):
        if not 0.0 < self.decay <= 1.0:
            raise ValueError(f"decay must be in (0, 1], got {self.decay}")


def ema_predict(history: Sequence[float], decay: float) -> float:
    """Exponentially weighted mean of transformed responses.

    Weights are decay**age with age 0 for the most recent entry.  Entries
    whose weight underflows to zero are dropped, so padding histories with
    zero-weight values cannot change the result.
    """
    if len(history) == 0:
        raise InsufficientDataError("EMA needs a nonempty history")
    if not 0.0 < decay <= 1.0:
        raise ValueError(f"decay must be in (0, 1], got {decay}")
    h = np.asarray(history, dtype=float)
    ages = np.arange(len(h) - 1, -1, -1, dtype=float)
    weights = decay ** ages
    nonzero = weights > 0.0
    weights = weights[nonzero]
    h = h[nonzero]
    return float(weights @ h / weights.sum())


DEFAULT_DECAY_GRID = tuple(round(0.05 * k, 2) for k in range(1, 21))  # 0.05 .. 1.00


def tune_ema_ex_post(corpus, protocol, grid: Sequence[float] = DEFAULT_DECAY_GRID) -> tuple[float, float]:
    """Pick the decay minimizing mean L2 error over the evaluation protocol.

    Runs the full out-of-sample protocol once per grid member and returns
    (argmin decay, its mean L2 error).  The decay is chosen on the
    evaluation set itself: an intentionally optimistic baseline.  Ties
    break toward the smaller decay.
    """
    if len(grid) == 0:
        raise ValueError("decay grid must be nonempty")
    from .bench import BenchProtocol, run_benchmark  # late: bench builds on this module

    best_decay, best_err = None, np.inf
    for decay in grid:
        p = BenchProtocol(
            kind=protocol.kind,
            cutoff_k=protocol.cutoff_k,
            leave_last_out=protocol.leave_last_out,
            models=("ema",),
            seed=protocol.seed,
            ema_decay=float(decay),
            model_form=protocol.model_form,
        )
        err = run_benchmark(corpus, p).summaries["ema"]["mean_l2"]
        if err < best_err:
            best_decay, best_err = float(decay), err
    return best_decay, best_err
