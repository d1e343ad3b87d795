"""K-SVD dictionary learning and its label-consistent extensions.

LC-KSVD stacks label-consistency rows (and, in mode 2, classifier rows) onto
the data matrix and runs the plain K-SVD alternation on the stacked system;
the trained stack is then split back into dictionary, transform, and
classifier parts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labels import CLASS_IDS, as_label_array
from .solvers import DEGENERATE_NORM, Dictionary, normalize_columns, omp_batch

MODES = ("none", "lcksvd1", "lcksvd2")

_RIDGE_LAMBDA = 1e-3
_UNUSED_ROW_TOL = 0.0  # a row is unused when it is exactly zero


@dataclass(frozen=True)
class TrainParams:
    """Dictionary learning knobs.

    ``K`` is the atom count (None means one atom per training sample), ``T``
    the sparsity bound used during coding (capped at K - 1), ``alpha`` the
    weight on the label-consistency term and ``beta`` the weight on the
    classification term. A non-positive ``min_rel_improvement`` disables
    early stopping.
    """

    K: int | None = None
    T: int = 16
    alpha: float = 1.0
    beta: float = 1.0
    iterations: int = 30
    seed: int = 20
    min_rel_improvement: float = 1e-5

    def __post_init__(self):
        if self.K is not None and self.K < 2:
            raise ValueError("K must be >= 2 (at least one atom per class)")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def resolved_k(self, n_samples: int) -> int:
        k = self.K if self.K is not None else n_samples
        if k < 2:
            raise ValueError("resolved K must be >= 2")
        return k

    def resolved_t(self, k: int) -> int:
        return max(1, min(self.T, k - 1))


@dataclass(frozen=True)
class LabelMatrices:
    """Discriminative code targets Q (atoms x samples) and one-hot labels H."""

    Q: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class DiscriminativeDictionary:
    """Learned (D, A, W) triple plus training diagnostics.

    ``A`` is present unless mode is "none"; ``W`` only for mode "lcksvd2".
    ``codes`` holds the final sparse codes in the stacked, unit-norm atom
    basis; rescaling them by ``D.scales`` compensates the split
    renormalization exactly.
    """

    D: Dictionary
    A: np.ndarray | None
    W: np.ndarray | None
    mode: str
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    codes: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if (self.A is None) != (self.mode == "none"):
            raise ValueError("A must be present exactly when mode != 'none'")
        if (self.W is not None) != (self.mode == "lcksvd2"):
            raise ValueError("W must be present exactly when mode == 'lcksvd2'")


def build_label_matrices(sample_labels, atom_labels) -> LabelMatrices:
    """Q[k, m] = 1 iff atom k and sample m share a class; H is one-hot."""
    sample_labels = as_label_array(sample_labels)
    atom_labels = as_label_array(atom_labels)
    Q = (atom_labels[:, None] == sample_labels[None, :]).astype(float)
    H = np.zeros((len(CLASS_IDS), sample_labels.shape[0]))
    H[sample_labels, np.arange(sample_labels.shape[0])] = 1.0
    return LabelMatrices(Q=Q, H=H)


def _check_training_matrix(Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
        raise ValueError(f"training matrix must be non-empty 2-d, got shape {Y.shape}")
    if not np.isfinite(Y).all():
        raise ValueError("training matrix contains non-finite values")
    return Y


def ksvd(Y, params: TrainParams, init: np.ndarray | None = None, atom_labels=None, probe=None):
    """Alternating sparse coding and per-atom rank-1 dictionary updates.

    Each iteration codes every column with the sparsity bound T, then updates
    every atom (and its coefficient row) against the residual restricted to
    the columns that use it; the update stage never increases the objective
    for fixed supports. Unused atoms are replaced by the currently
    worst-represented sample, normalized. Returns ``(dictionary, codes,
    objective_trace)``.

    ``probe``, when given, is called as ``probe(iteration, obj_after_coding,
    obj_after_update)`` (a testing hook).
    """
    Y = _check_training_matrix(Y)
    d, s = Y.shape
    k = params.resolved_k(s)
    t = params.resolved_t(k)

    if init is None:
        rng = np.random.default_rng(params.seed)
        idx = rng.choice(s, size=k, replace=s < k)
        D, _ = normalize_columns(Y[:, idx])
    else:
        init = np.asarray(init, dtype=float)
        if init.shape != (d, k):
            raise ValueError(f"init must have shape ({d}, {k}), got {init.shape}")
        D, _ = normalize_columns(init)
    if atom_labels is None:
        atom_labels = np.zeros(k, dtype=int)

    trace: list[float] = []
    prev = None
    X = np.zeros((k, s))
    for it in range(params.iterations):
        labeled = Dictionary(atoms=D, atom_labels=np.asarray(atom_labels, dtype=int),
                             scales=np.linalg.norm(D, axis=0))
        X, _, _ = omp_batch(labeled, Y, t)
        E = Y - D @ X
        obj_coding = float(np.sum(E * E))

        for a in range(k):
            row = X[a]
            used = np.flatnonzero(row)
            if used.size == 0:
                continue
            Ek = E[:, used] + np.outer(D[:, a], row[used])
            g = row[used]
            dvec = Ek @ g
            nrm = np.linalg.norm(dvec)
            if nrm < DEGENERATE_NORM:
                continue
            dvec /= nrm
            gnew = Ek.T @ dvec
            D[:, a] = dvec
            X[a, used] = gnew
            E[:, used] = Ek - np.outer(dvec, gnew)

        # Replace atoms whose coefficient row went unused by the training
        # column that is currently reconstructed worst.
        unused = [a for a in range(k) if not np.any(np.abs(X[a]) > _UNUSED_ROW_TOL)]
        if unused:
            col_err = np.linalg.norm(E, axis=0).copy()
            for a in unused:
                j = int(np.argmax(col_err))
                col_err[j] = -1.0
                nrm = np.linalg.norm(Y[:, j])
                D[:, a] = Y[:, j] / nrm if nrm >= DEGENERATE_NORM else 0.0

        obj = float(np.sum(E * E))
        if probe is not None:
            probe(it, obj_coding, obj)
        trace.append(obj)
        if prev is not None and params.min_rel_improvement > 0:
            if (prev - obj) < params.min_rel_improvement * max(prev, 1e-12):
                break
        prev = obj

    final = Dictionary.from_matrix(D, atom_labels)
    return final, X, np.asarray(trace)


def _ridge_fit(targets: np.ndarray, X: np.ndarray, lam: float = _RIDGE_LAMBDA) -> np.ndarray:
    """Solve min ||targets - M X||_F^2 + lam ||M||_F^2 for M."""
    k = X.shape[0]
    gram = X @ X.T + lam * np.eye(k)
    return np.linalg.solve(gram, X @ targets.T).T


def _atoms_per_class(sample_labels: np.ndarray, k: int) -> dict[int, int]:
    """Proportional allocation with at least one atom per class, summing to k."""
    s = sample_labels.shape[0]
    counts = {cid: int(np.sum(sample_labels == cid)) for cid in CLASS_IDS}
    for cid, n in counts.items():
        if n == 0:
            raise ValueError(f"class id {cid} has zero samples")
    raw = {cid: k * n / s for cid, n in counts.items()}
    alloc = {cid: int(np.floor(v)) for cid, v in raw.items()}
    rem = k - sum(alloc.values())
    by_frac = sorted(CLASS_IDS, key=lambda c: (-(raw[c] - alloc[c]), c))
    for cid in by_frac[:rem]:
        alloc[cid] += 1
    for cid in CLASS_IDS:  # enforce >= 1 atom per class
        while alloc[cid] == 0:
            donor = max(CLASS_IDS, key=lambda c: alloc[c])
            alloc[donor] -= 1
            alloc[cid] += 1
    return alloc


def init_lcksvd(Y, sample_labels, params: TrainParams):
    """Seeded initialization for label-consistent training.

    Initial atoms are drawn per class from that class's samples (without
    replacement when possible) and normalized; A and W start from ridge
    regressions of the label matrices onto the initial codes. Returns
    ``(D0, X0, A0, W0)``.
    """
    Y = _check_training_matrix(Y)
    sample_labels = as_label_array(sample_labels)
    if sample_labels.shape[0] != Y.shape[1]:
        raise ValueError("one label per training column required")
    k = params.resolved_k(Y.shape[1])
    t = params.resolved_t(k)
    alloc = _atoms_per_class(sample_labels, k)

    rng = np.random.default_rng(params.seed)
    chosen: list[int] = []
    atom_labels: list[int] = []
    for cid in CLASS_IDS:
        pool = np.flatnonzero(sample_labels == cid)
        take = alloc[cid]
        picks = rng.choice(pool, size=take, replace=take > pool.size)
        chosen.extend(int(p) for p in picks)
        atom_labels.extend([cid] * take)

    D0 = Dictionary.from_matrix(Y[:, chosen], np.asarray(atom_labels))
    X0, _, _ = omp_batch(D0, Y, t)
    lm = build_label_matrices(sample_labels, atom_labels)
    A0 = _ridge_fit(lm.Q, X0)
    W0 = _ridge_fit(lm.H, X0)
    return D0, X0, A0, W0


def lcksvd_train(Y, sample_labels, params: TrainParams, mode: str) -> DiscriminativeDictionary:
    """Label-consistent dictionary learning.

    Runs K-SVD on the stacked system [Y; sqrt(alpha) Q] (mode "lcksvd1") or
    [Y; sqrt(alpha) Q; sqrt(beta) H] (mode "lcksvd2") with the stacked
    dictionary [D; sqrt(alpha) A; sqrt(beta) W]; zero-weighted rows are left
    out entirely, so alpha = beta = 0 reduces to plain K-SVD on Y. After
    training the stack is split and renormalized so dictionary atoms have
    unit norm, with A and W rescaled by the same factors.
    """
    if mode not in ("lcksvd1", "lcksvd2"):
        raise ValueError(f"mode must be 'lcksvd1' or 'lcksvd2', got {mode!r}")
    Y = _check_training_matrix(Y)
    sample_labels = as_label_array(sample_labels)

    D0, X0, A0, W0 = init_lcksvd(Y, sample_labels, params)
    atom_labels = D0.atom_labels
    lm = build_label_matrices(sample_labels, atom_labels)

    use_q = params.alpha > 0
    use_h = mode == "lcksvd2" and params.beta > 0
    data_rows = [Y]
    dict_rows = [D0.atoms]
    if use_q:
        data_rows.append(np.sqrt(params.alpha) * lm.Q)
        dict_rows.append(np.sqrt(params.alpha) * A0)
    if use_h:
        data_rows.append(np.sqrt(params.beta) * lm.H)
        dict_rows.append(np.sqrt(params.beta) * W0)

    stacked_y = np.vstack(data_rows)
    stacked_d = np.vstack(dict_rows)
    learned, X, trace = ksvd(stacked_y, params, init=stacked_d, atom_labels=atom_labels)

    d = Y.shape[0]
    k = learned.n_atoms
    at = learned.atoms
    d_raw = at[:d]
    pos = d
    if use_q:
        a_raw = at[pos : pos + k]
        pos += k
    if use_h:
        w_raw = at[pos : pos + 2]

    norms = np.linalg.norm(d_raw, axis=0)
    degenerate = norms < DEGENERATE_NORM
    safe = np.where(degenerate, 1.0, norms)
    d_final = d_raw / safe
    d_final[:, degenerate] = 0.0
    final = Dictionary(atoms=d_final, atom_labels=atom_labels, scales=norms)

    # The stacked rows hold sqrt(alpha) * A and sqrt(beta) * W; divide the
    # weights back out so A maps codes onto Q (and W onto H) directly.
    A = a_raw / (np.sqrt(params.alpha) * safe) if use_q else A0
    W = None
    if mode == "lcksvd2":
        W = w_raw / (np.sqrt(params.beta) * safe) if use_h else W0
    return DiscriminativeDictionary(D=final, A=A, W=W, mode=mode, objective_trace=trace, codes=X)
