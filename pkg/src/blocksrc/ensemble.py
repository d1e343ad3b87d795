"""Per-block sparse classification and ensemble fusion.

Each block is coded against its position's dictionary; the per-block hard
label follows the SRC rule (smallest class-restricted reconstruction
residual). Two fusion rules combine the blocks: majority voting over hard
labels (bbmap) and the mean of per-block log-likelihood sparsity scores
thresholded at tau (bbll).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import BENIGN, MALIGNANT
from .solvers import (
    ConvergenceError,
    Dictionary,
    L1_LOG_FLOOR,
    SparseCode,
    bpdn,
    bpdn_batch,
    class_residuals,
)

DEFAULT_EPS_SCALE = 0.05  # eps = 0.05 * ||y||_2 when no rule is configured


@dataclass(frozen=True)
class BlockDecision:
    """One block's sparse code and its classification diagnostics."""

    block_index: int
    code: SparseCode
    per_class_l1: np.ndarray
    per_class_residual: np.ndarray
    hard_label: int
    lls: float
    degenerate: bool = False


@dataclass(frozen=True)
class EnsembleDecision:
    """Fused decision for one sample under both rules."""

    posterior: np.ndarray
    vote_score: float
    ells: float
    label_bbmap: int
    label_bbll: int
    tau: float


def lls_score(per_class_l1: np.ndarray, invert: bool = False) -> float:
    """Log ratio of class l1 masses, guarded away from log(0).

    The default orientation is positive when the malignant mass dominates, so
    a positive score votes malignant. ``invert=True`` negates the score,
    choosing the class with the smaller coefficient mass instead; swapping the
    class roles this way negates every score exactly.
    """
    num = max(float(per_class_l1[BENIGN]), L1_LOG_FLOOR)
    den = max(float(per_class_l1[MALIGNANT]), L1_LOG_FLOOR)
    score = -np.log(num / den)
    return float(-score) if invert else float(score)


def _decision_from_code(Dj, yj, code, block_index, invert_lls):
    resid, l1 = class_residuals(Dj, code, yj)
    # Residual tie goes to benign, the prior class.
    hard = BENIGN if resid[BENIGN] <= resid[MALIGNANT] else MALIGNANT
    return BlockDecision(
        block_index=block_index,
        code=code,
        per_class_l1=l1,
        per_class_residual=resid,
        hard_label=hard,
        lls=lls_score(l1, invert=invert_lls),
    )


def _degenerate_decision(block_index: int, n_atoms: int, ynorm: float) -> BlockDecision:
    zero = SparseCode.from_coefficients(np.zeros(n_atoms), ynorm, 0)
    return BlockDecision(
        block_index=block_index,
        code=zero,
        per_class_l1=np.zeros(2),
        per_class_residual=np.full(2, ynorm),
        hard_label=BENIGN,
        lls=0.0,
        degenerate=True,
    )


def block_decision(
    Dj: Dictionary,
    yj: np.ndarray,
    eps: float | None = None,
    block_index: int = 0,
    invert_lls: bool = False,
) -> BlockDecision:
    """Code one block and classify it.

    ``eps`` defaults to ``DEFAULT_EPS_SCALE * ||yj||``. A block whose
    dictionary has no usable atoms, or whose signal is all-zero, yields a
    degenerate decision: benign (the prior), zero score. When the error bound
    is unreachable the solver's best iterate is used and the code is marked
    infeasible.
    """
    yj = np.asarray(yj, dtype=float).ravel()
    ynorm = float(np.linalg.norm(yj))
    if not Dj.usable.any() or ynorm < 1e-12:
        return _degenerate_decision(block_index, Dj.n_atoms, ynorm)
    if eps is None:
        eps = DEFAULT_EPS_SCALE * ynorm
    try:
        code = bpdn(Dj, yj, eps)
    except ConvergenceError as err:
        code = err.best
    return _decision_from_code(Dj, yj, code, block_index, invert_lls)


def block_decisions_batch(
    Dj: Dictionary,
    Yj: np.ndarray,
    eps=None,
    block_index: int = 0,
    invert_lls: bool = False,
) -> list[BlockDecision]:
    """Vectorized :func:`block_decision` over the columns of ``Yj``."""
    Yj = np.asarray(Yj, dtype=float)
    m = Yj.shape[1]
    ynorm = np.linalg.norm(Yj, axis=0)
    if not Dj.usable.any():
        return [_degenerate_decision(block_index, Dj.n_atoms, float(ynorm[i])) for i in range(m)]

    out: list[BlockDecision | None] = [None] * m
    live = np.flatnonzero(ynorm >= 1e-12)
    for i in np.flatnonzero(ynorm < 1e-12):
        out[i] = _degenerate_decision(block_index, Dj.n_atoms, float(ynorm[i]))
    if live.size:
        if eps is None:
            eps_vec = DEFAULT_EPS_SCALE * ynorm[live]
        else:
            eps_vec = np.broadcast_to(np.asarray(eps, dtype=float), (m,))[live]
        X, rn, feas, iters = bpdn_batch(Dj, Yj[:, live], eps_vec)
        for pos, i in enumerate(live):
            code = SparseCode.from_coefficients(X[:, pos], rn[pos], iters[pos], bool(feas[pos]))
            out[i] = _decision_from_code(Dj, Yj[:, i], code, block_index, invert_lls)
    return out  # type: ignore[return-value]


def bbmap(decisions: list[BlockDecision]) -> tuple[np.ndarray, int, float]:
    """Majority vote over per-block hard labels.

    Returns ``(posterior, label, vote_score)``; the posterior is the fraction
    of blocks voting for each class, ties break toward malignant, and
    ``vote_score`` is the malignant fraction (the continuous score).
    """
    if not decisions:
        raise ValueError("no block decisions to fuse")
    n = len(decisions)
    votes_mal = sum(1 for d in decisions if d.hard_label == MALIGNANT)
    posterior = np.array([(n - votes_mal) / n, votes_mal / n])
    label = MALIGNANT if posterior[MALIGNANT] >= posterior[BENIGN] else BENIGN
    return posterior, label, float(posterior[MALIGNANT])


def bbll(decisions: list[BlockDecision], tau: float = 0.0, positive_class: int = MALIGNANT) -> tuple[float, int]:
    """Mean of per-block log-likelihood scores, thresholded at ``tau``.

    Blocks are summed in ascending block-index order so parallel evaluation
    cannot change the result. The label is ``positive_class`` exactly when
    ``ells - tau >= 0`` (a unit step); the pre-threshold score is the ROC
    sweep variable.
    """
    if not decisions:
        raise ValueError("no block decisions to fuse")
    ordered = sorted(decisions, key=lambda d: d.block_index)
    ells = float(np.mean([d.lls for d in ordered]))
    negative = BENIGN if positive_class == MALIGNANT else MALIGNANT
    label = positive_class if ells - tau >= 0 else negative
    return ells, label


def ensemble_decision(decisions: list[BlockDecision], tau: float = 0.0) -> EnsembleDecision:
    """Fuse block decisions under both rules.

    The threshold branch always assigns malignant when ``ells - tau >= 0``;
    computing the block scores with ``invert_lls`` therefore yields the
    smaller-mass decision rule instead of the default larger-mass one.
    """
    posterior, label_map, vote = bbmap(decisions)
    ells, label_ll = bbll(decisions, tau, positive_class=MALIGNANT)
    return EnsembleDecision(
        posterior=posterior,
        vote_score=vote,
        ells=ells,
        label_bbmap=label_map,
        label_bbll=label_ll,
        tau=tau,
    )


def roc_auc(scores, truth) -> tuple[np.ndarray, float]:
    """ROC curve and trapezoidal AUC with malignant as the positive class.

    Equal scores are grouped into a single threshold step. Returns
    ``(points, auc)`` where points rows are ``(threshold, fpr, tpr)`` and the
    curve runs from (0, 0) at threshold +inf to (1, 1) at the lowest score.
    """
    scores = np.asarray(scores, dtype=float).ravel()
    truth = np.asarray(truth, dtype=int).ravel()
    if scores.shape != truth.shape or scores.size == 0:
        raise ValueError("scores and truth must be non-empty and equally long")
    pos = truth == MALIGNANT
    n_pos = int(pos.sum())
    n_neg = int(scores.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present to sweep a ROC curve")

    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    p_sorted = pos[order]
    tp = np.cumsum(p_sorted)
    fp = np.cumsum(~p_sorted)
    # Keep only the last entry of each tied-score run.
    last = np.flatnonzero(np.diff(s_sorted) != 0)
    last = np.append(last, scores.size - 1)
    thresholds = s_sorted[last]
    tpr = tp[last] / n_pos
    fpr = fp[last] / n_neg
    points = np.column_stack(
        (
            np.concatenate(([np.inf], thresholds)),
            np.concatenate(([0.0], fpr)),
            np.concatenate(([0.0], tpr)),
        )
    )
    auc = float(np.trapezoid(points[:, 2], points[:, 1]))
    return points, auc


def write_roc_csv(path, points: np.ndarray) -> None:
    """Write ROC points as ``threshold,fpr,tpr`` rows."""
    lines = ["threshold,fpr,tpr"]
    for thr, fpr, tpr in points:
        lines.append(f"{thr!r},{fpr!r},{tpr!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_roc_svg(path, points: np.ndarray, title: str = "ROC") -> None:
    """Write a minimal standalone SVG polyline plot of the ROC curve."""
    size, margin = 480, 48
    span = size - 2 * margin

    def sx(v: float) -> float:
        return margin + v * span

    def sy(v: float) -> float:
        return size - margin - v * span

    poly = " ".join(f"{sx(f):.2f},{sy(t):.2f}" for _, f, t in points)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(0)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(0)}" y2="{sy(1)}" stroke="black"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" '
        f'stroke="#bbbbbb" stroke-dasharray="4 4"/>',
        f'<polyline points="{poly}" fill="none" stroke="#b22222" stroke-width="2"/>',
        f'<text x="{size / 2:.0f}" y="{size - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">false positive rate</text>',
        f'<text x="14" y="{size / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14" transform="rotate(-90 14 {size / 2:.0f})">true positive rate</text>',
        f'<text x="{size / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{title}</text>',
        "</svg>",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
