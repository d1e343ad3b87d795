"""Sparse-coding kernels.

Column normalization, greedy pursuit with a sparsity bound, noise-constrained
l1 minimization, and class-restricted residual diagnostics. Everything here is
a pure function of its inputs; reduction order is fixed by index, so identical
inputs give identical outputs and concurrent callers are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import CLASS_IDS, class_name

DEGENERATE_NORM = 1e-12
L1_LOG_FLOOR = 1e-12

_OMP_RIDGE = 1e-10
_OMP_PROGRESS_TOL = 1e-13
_BPDN_BISECT_STEPS = 30
_FISTA_MAX_ITER = 1000
_FISTA_RTOL = 1e-6


class ConvergenceError(RuntimeError):
    """A solver missed its constraint; carries the best iterate it found."""

    def __init__(self, message: str, best: "SparseCode"):
        super().__init__(message)
        self.best = best


def normalize_columns(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scale each column of ``M`` to unit l2 norm.

    Columns whose norm falls below ``DEGENERATE_NORM`` are zeroed instead of
    divided by a tiny number; they are flagged degenerate downstream through
    the returned scales. Returns ``(normalized, scales)`` where ``scales``
    holds the original column norms.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-d matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValueError("matrix contains non-finite values")
    scales = np.linalg.norm(M, axis=0)
    degenerate = scales < DEGENERATE_NORM
    out = M / np.where(degenerate, 1.0, scales)
    out[:, degenerate] = 0.0
    return out, scales


@dataclass(frozen=True)
class Dictionary:
    """Column-atom dictionary with per-atom class labels.

    Non-degenerate columns have unit l2 norm; degenerate columns (original
    norm below ``DEGENERATE_NORM``) are all-zero and never selected by the
    solvers. ``scales`` records pre-normalization column norms.
    """

    atoms: np.ndarray
    atom_labels: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        labels = np.asarray(self.atom_labels, dtype=int)
        scales = np.asarray(self.scales, dtype=float)
        if atoms.ndim != 2 or atoms.shape[0] < 1 or atoms.shape[1] < 1:
            raise ValueError(f"atoms must be a non-empty 2-d matrix, got shape {atoms.shape}")
        n = atoms.shape[1]
        if labels.shape != (n,):
            raise ValueError(f"atom_labels must have length {n}, got {labels.shape}")
        if scales.shape != (n,):
            raise ValueError(f"scales must have length {n}, got {scales.shape}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "atom_labels", labels)
        object.__setattr__(self, "scales", scales)

    @classmethod
    def from_matrix(cls, M: np.ndarray, atom_labels) -> "Dictionary":
        atoms, scales = normalize_columns(M)
        return cls(atoms=atoms, atom_labels=np.asarray(atom_labels), scales=scales)

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]

    @property
    def degenerate(self) -> np.ndarray:
        return self.scales < DEGENERATE_NORM

    @property
    def usable(self) -> np.ndarray:
        return ~self.degenerate


@dataclass(frozen=True)
class SparseCode:
    """Sparse solution vector with solver diagnostics.

    ``support`` always equals the indices of the nonzero coefficients.
    ``feasible`` is False when the code came out of a solver that could not
    meet its error constraint (the best iterate found).
    """

    coefficients: np.ndarray
    support: np.ndarray
    residual_norm: float
    iterations: int
    feasible: bool = True

    @classmethod
    def from_coefficients(cls, x, residual_norm, iterations, feasible=True) -> "SparseCode":
        x = np.asarray(x, dtype=float)
        return cls(x, np.flatnonzero(x), float(residual_norm), int(iterations), bool(feasible))


def _check_signal(D: Dictionary, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != D.dim:
        raise ValueError(f"signal length {y.shape[0]} does not match dictionary rows {D.dim}")
    if not np.isfinite(y).all():
        raise ValueError("signal contains non-finite values")
    return y


def _check_signals(D: Dictionary, Y) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != D.dim:
        raise ValueError(f"expected signals of shape ({D.dim}, m), got {Y.shape}")
    if not np.isfinite(Y).all():
        raise ValueError("signals contain non-finite values")
    return Y


def _spd_solve(G: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Normal equations on a tiny support; ridge jitter only when the Gram
    # matrix is numerically rank-deficient.
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(G + _OMP_RIDGE * np.eye(G.shape[0]))
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def omp(D: Dictionary, y: np.ndarray, T: int, eps: float = 0.0) -> SparseCode:
    """Greedy pursuit: pick the atom most correlated with the residual, then
    re-fit the coefficients by least squares restricted to the support.

    Stops once the residual norm reaches ``eps`` or the support holds ``T``
    atoms. The residual norm never increases across iterations.
    """
    y = _check_signal(D, y)
    if int(T) < 1:
        raise ValueError("sparsity bound T must be >= 1")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    usable = D.usable
    if not usable.any():
        raise ValueError("dictionary has no usable atoms (all columns degenerate)")

    n = D.n_atoms
    rnorm = float(np.linalg.norm(y))
    if rnorm <= eps:
        return SparseCode.from_coefficients(np.zeros(n), rnorm, 0)

    A = D.atoms
    blocked = ~usable
    selected: list[int] = []
    residual = y.copy()
    xs = np.zeros(0)
    for _ in range(min(int(T), int(usable.sum()))):
        corr = A.T @ residual
        corr[blocked] = 0.0
        k = int(np.argmax(np.abs(corr)))
        if abs(corr[k]) <= _OMP_PROGRESS_TOL:
            break
        selected.append(k)
        blocked[k] = True
        S = A[:, selected]
        xs = _spd_solve(S.T @ S, S.T @ y)
        residual = y - S @ xs
        rnorm = float(np.linalg.norm(residual))
        if rnorm <= eps:
            break

    x = np.zeros(n)
    if selected:
        x[selected] = xs
    return SparseCode.from_coefficients(x, rnorm, len(selected))


def omp_batch(D: Dictionary, Y: np.ndarray, T: int, eps=0.0):
    """Column-parallel greedy pursuit over the columns of ``Y``.

    Same selection rule as :func:`omp`; the per-support least squares is
    carried by incremental Gram-Schmidt updates so all columns advance in
    lockstep. Returns ``(codes, residual_norms, iteration_counts)`` with
    codes of shape ``(n_atoms, n_signals)``.
    """
    Y = _check_signals(D, Y)
    if int(T) < 1:
        raise ValueError("sparsity bound T must be >= 1")
    usable = D.usable
    if not usable.any():
        raise ValueError("dictionary has no usable atoms (all columns degenerate)")

    A = D.atoms
    d, n = A.shape
    s = Y.shape[1]
    eps_vec = np.broadcast_to(np.asarray(eps, dtype=float), (s,)).copy()
    t_max = min(int(T), int(usable.sum()))

    X = np.zeros((n, s))
    R = Y.copy()
    rnorm = np.linalg.norm(R, axis=0)
    active = rnorm > eps_vec
    qs = np.zeros((t_max, d, s))
    rfac = np.zeros((t_max, t_max, s))
    proj = np.zeros((t_max, s))
    supp = np.full((t_max, s), -1, dtype=int)
    blocked = np.broadcast_to(~usable[:, None], (n, s)).copy()
    sizes = np.zeros(s, dtype=int)

    for t in range(t_max):
        if not active.any():
            break
        corr = A.T @ R
        corr[blocked] = 0.0
        corr[:, ~active] = 0.0
        mag = np.abs(corr)
        pick = np.argmax(mag, axis=0)
        strength = mag[pick, np.arange(s)]
        grow = active & (strength > _OMP_PROGRESS_TOL)
        active = grow
        if not grow.any():
            break
        cols = np.flatnonzero(grow)
        a = A[:, pick[cols]]
        for l in range(t):
            ql = qs[l][:, cols]
            h = np.einsum("ij,ij->j", ql, a)
            a = a - ql * h
            rfac[l, t, cols] = h
        nrm = np.linalg.norm(a, axis=0)
        ok = nrm > 1e-10
        okcols = cols[ok]
        if okcols.size:
            q = a[:, ok] / nrm[ok]
            qs[t][:, okcols] = q
            rfac[t, t, okcols] = nrm[ok]
            c = np.einsum("ij,ij->j", q, R[:, okcols])
            proj[t, okcols] = c
            R[:, okcols] -= q * c
            supp[t, okcols] = pick[okcols]
            sizes[okcols] += 1
            blocked[pick[okcols], okcols] = True
            rnorm[okcols] = np.linalg.norm(R[:, okcols], axis=0)
            active[okcols] = rnorm[okcols] > eps_vec[okcols]
        active[cols[~ok]] = False

    xs = np.zeros((t_max, s))
    for i in range(t_max - 1, -1, -1):
        m = sizes > i
        if not m.any():
            continue
        acc = proj[i].copy()
        if i + 1 < t_max:
            acc -= np.einsum("jc,jc->c", rfac[i, i + 1 :, :], xs[i + 1 :, :])
        xs[i, m] = acc[m] / rfac[i, i, m]
    for t in range(t_max):
        m = sizes > t
        if m.any():
            cols = np.flatnonzero(m)
            X[supp[t, cols], cols] = xs[t, cols]
    return X, rnorm, sizes


def _fista(A: np.ndarray, AtY: np.ndarray, AtA: np.ndarray, lam: np.ndarray, x0: np.ndarray, L: float):
    """Iterative shrinkage with momentum, vectorized over columns.

    Momentum restarts adaptively per column when it points against the
    descent direction. Each column freezes once its relative iterate change
    drops below ``_FISTA_RTOL``; a column's trajectory never depends on which
    other columns share the batch. Returns ``(x, iteration_counts)``.
    """
    x = x0.copy()
    z = x0.copy()
    m = x0.shape[1]
    t = np.ones(m)
    alive = np.ones(m, dtype=bool)
    iters = np.zeros(m, dtype=int)
    thresh = lam / L
    rtol_sq = _FISTA_RTOL * _FISTA_RTOL
    for _ in range(_FISTA_MAX_ITER):
        if not alive.any():
            break
        w = z - (AtA @ z - AtY) / L
        xn = np.sign(w) * np.maximum(np.abs(w) - thresh, 0.0)
        dx = xn - x
        restart = np.einsum("ij,ij->j", z - xn, dx) > 0.0
        tr = np.where(restart, 1.0, t)
        tn = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tr * tr))
        zn = xn + ((tr - 1.0) / tn) * dx
        num = np.einsum("ij,ij->j", dx, dx)
        den = np.maximum(np.einsum("ij,ij->j", xn, xn), 1e-24)
        conv = num <= rtol_sq * den
        if alive.all():
            x, z = xn, zn
            t = tn
            iters += 1
        else:
            x[:, alive] = xn[:, alive]
            z[:, alive] = zn[:, alive]
            t = np.where(alive, tn, t)
            iters[alive] += 1
        alive = alive & ~conv
    return x, iters


def bpdn_batch(D: Dictionary, Y: np.ndarray, eps):
    """Noise-constrained l1 minimization over the columns of ``Y``.

    Per column solves ``min ||x||_1 s.t. ||Dx - y||_2 <= eps`` through FISTA
    on the penalized form with an outer bisection (at most
    ``_BPDN_BISECT_STEPS`` steps) on the penalty weight. Columns where the
    constraint is unreachable keep the lowest-residual iterate found and are
    reported infeasible. Returns ``(codes, residual_norms, feasible,
    iteration_counts)``.
    """
    Y = _check_signals(D, Y)
    s = Y.shape[1]
    eps_vec = np.broadcast_to(np.asarray(eps, dtype=float), (s,)).copy()
    if not (eps_vec > 0).all():
        raise ValueError("eps must be > 0")
    if not D.usable.any():
        raise ValueError("dictionary has no usable atoms (all columns degenerate)")

    A = D.atoms
    n = D.n_atoms
    ynorm = np.linalg.norm(Y, axis=0)
    X = np.zeros((n, s))
    rnorm = ynorm.copy()
    feasible = ynorm <= eps_vec  # the origin is feasible with minimal l1 norm
    iters = np.zeros(s, dtype=int)

    work = np.flatnonzero(~feasible)
    if work.size == 0:
        return X, rnorm, feasible, iters

    # Least-squares floor on the usable atoms: columns whose floor exceeds
    # eps can never satisfy the bound, so their best iterate is the limit the
    # bisection would crawl toward, the least-squares solution itself.
    usable_idx = np.flatnonzero(D.usable)
    Au = A[:, usable_idx]
    xls, *_ = np.linalg.lstsq(Au, Y[:, work], rcond=None)
    floor = np.linalg.norm(Au @ xls - Y[:, work], axis=0)
    hopeless = floor > eps_vec[work]
    for pos in np.flatnonzero(hopeless):
        col = work[pos]
        X[usable_idx, col] = xls[:, pos]
        rnorm[col] = floor[pos]

    todo = work[~hopeless]
    if todo.size == 0:
        return X, rnorm, feasible, iters

    Ys = Y[:, todo]
    es = eps_vec[todo]
    AtY = A.T @ Ys
    AtA = A.T @ A
    L = float(np.linalg.norm(A, 2)) ** 2

    lam_hi = np.abs(AtY).max(axis=0)
    lo = np.zeros_like(lam_hi)
    hi = lam_hi.copy()
    x = np.zeros((n, todo.size))
    best_x = np.zeros_like(x)
    best_r = np.linalg.norm(Ys, axis=0)
    found = np.zeros(todo.size, dtype=bool)
    total = np.zeros(todo.size, dtype=int)
    scale = np.maximum(lam_hi, 1e-30)

    for step in range(_BPDN_BISECT_STEPS):
        if step == 0:
            # informed first probe: the residual grows roughly linearly in
            # the penalty, so start near the expected crossing
            lam = np.clip(lam_hi * es / np.maximum(best_r, 1e-30), 1e-12 * scale, hi)
        else:
            lam = 0.5 * (lo + hi)
        x, used = _fista(A, AtY, AtA, lam, x, L)
        total += used
        r = np.linalg.norm(A @ x - Ys, axis=0)
        feas = r <= es
        take = feas | (~found & (r < best_r))
        if take.any():
            best_x[:, take] = x[:, take]
            best_r[take] = r[take]
        found |= feas
        lo = np.where(feas, lam, lo)
        hi = np.where(feas, hi, lam)
        if np.all((hi - lo) <= 1e-9 * scale):
            break

    X[:, todo] = best_x
    rnorm[todo] = best_r
    feasible[todo] = found
    iters[todo] = total
    return X, rnorm, feasible, iters


def bpdn(D: Dictionary, y: np.ndarray, eps: float) -> SparseCode:
    """Noise-constrained l1 minimization for a single signal.

    Raises :class:`ConvergenceError` carrying the best iterate when the error
    bound cannot be met; the returned code otherwise satisfies
    ``||Dx - y||_2 <= eps * (1 + 1e-3)``.
    """
    y = _check_signal(D, y)
    if not eps > 0:
        raise ValueError("eps must be > 0")
    X, rn, feas, iters = bpdn_batch(D, y[:, None], np.array([float(eps)]))
    code = SparseCode.from_coefficients(X[:, 0], rn[0], iters[0], bool(feas[0]))
    if not feas[0]:
        raise ConvergenceError(
            f"residual {rn[0]:.6g} stayed above the bound {eps:.6g} "
            f"after {_BPDN_BISECT_STEPS} bisection steps",
            code,
        )
    return code


def class_residuals(D: Dictionary, code, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class-restricted reconstruction residuals and l1 masses.

    For class ``i`` the coefficients of all other classes are zeroed before
    reconstructing; returns ``(residuals, l1_norms)`` indexed by class id.
    """
    y = _check_signal(D, y)
    x = np.asarray(code.coefficients if isinstance(code, SparseCode) else code, dtype=float).ravel()
    if x.shape[0] != D.n_atoms:
        raise ValueError(f"code length {x.shape[0]} does not match atom count {D.n_atoms}")
    labels = D.atom_labels
    resid = np.empty(2)
    l1 = np.empty(2)
    for cid in CLASS_IDS:
        mask = labels == cid
        if not mask.any():
            raise ValueError(f"class '{class_name(cid)}' has no atoms in the dictionary")
        idx = np.flatnonzero(mask & (x != 0))
        recon = D.atoms[:, idx] @ x[idx] if idx.size else np.zeros(D.dim)
        resid[cid] = np.linalg.norm(y - recon)
        l1[cid] = float(np.abs(x[mask]).sum())
    return resid, l1
