"""Matrix norms for q in {2, inf}, their duals, and the associated duality maps.

For an r x c real matrix the two operator norms handled here are the
spectral norm (largest singular value, q=2) and the largest absolute row
sum (q=inf).  Their dual norms on linear functionals, represented as
matrices under the Frobenius pairing <l, a> = sum_ij l_ij * a_ij, are the
trace norm (sum of singular values) and the sum of per-row maxima.  A
duality map rho sends a functional l to a matrix with

    operator_norm(rho(l), q) == dual_norm(l, q)
    <l, rho(l)>              == dual_norm(l, q) ** 2

which generalizes "the gradient direction" to these non-inner-product
norms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class NormTag(enum.Enum):
    """Selector for the norm family: Q2 = spectral, QINF = max row sum."""

    Q2 = "2"
    QINF = "inf"

    @classmethod
    def from_string(cls, s: str) -> "NormTag":
        key = s.strip().lower()
        if key in ("2", "q2"):
            return cls.Q2
        if key in ("inf", "infinity", "qinf", "∞"):
            return cls.QINF
        raise ValueError(f"unknown norm tag {s!r} (expected '2' or 'inf')")


def validate_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array and reject empty or non-finite input."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass
class SingularDecomposition:
    """Economy SVD a = u @ diag(singular_values) @ v.T.

    u and v have orthonormal columns, singular values are sorted in
    descending order, and rank_tol is the threshold below which a singular
    value is treated as numerically zero.
    """

    u: np.ndarray
    singular_values: np.ndarray
    v: np.ndarray
    rank_tol: float

    @property
    def rank(self) -> int:
        return int(np.count_nonzero(self.singular_values > self.rank_tol))

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.singular_values) @ self.v.T


class SvdConvergenceError(RuntimeError):
    """Raised when the Jacobi sweeps fail to converge; carries the residual."""

    def __init__(self, residual: float, sweeps: int):
        self.residual = residual
        self.sweeps = sweeps
        super().__init__(
            f"one-sided Jacobi SVD did not converge after {sweeps} sweeps "
            f"(off-diagonal residual {residual:.3e})"
        )


_JACOBI_EPS = 5e-13
_MAX_SWEEPS = 100


def _complete_orthonormal(u: np.ndarray, ncols: int) -> np.ndarray:
    """Fill zero columns of u with unit vectors orthogonal to the rest."""
    m = u.shape[0]
    filled = [u[:, j] for j in range(ncols) if np.any(u[:, j])]
    out = u.copy()
    for j in range(ncols):
        if np.any(out[:, j]):
            continue
        for i in range(m):
            cand = np.zeros(m)
            cand[i] = 1.0
            for w in filled:
                cand -= (w @ cand) * w
            norm = np.linalg.norm(cand)
            if norm > 0.5:
                out[:, j] = cand / norm
                filled.append(out[:, j])
                break
    return out


def _round_robin_pairs(n: int):
    """Tournament schedule: n-1 rounds of disjoint column pairs covering
    every pair once (a virtual padding slot is skipped when n is odd)."""
    slots = list(range(n)) + ([-1] if n % 2 else [])
    half = len(slots) // 2
    rounds = []
    for _ in range(len(slots) - 1):
        pairs = [
            (slots[i], slots[-1 - i])
            for i in range(half)
            if slots[i] != -1 and slots[-1 - i] != -1
        ]
        rounds.append(
            (
                np.array([min(p) for p in pairs]),
                np.array([max(p) for p in pairs]),
            )
        )
        slots = [slots[0]] + [slots[-1]] + slots[1:-1]
    return rounds


def _jacobi_round(bt: np.ndarray, vt: np.ndarray, ps: np.ndarray, qs: np.ndarray) -> float:
    """Rotate the disjoint column pairs (ps, qs) in one batch and return
    the worst relative off-diagonal among them.

    bt and vt hold the working columns as rows (contiguous), so the
    gathers and scattered writes stay cache-friendly.
    """
    bp = bt[ps]
    bq = bt[qs]
    app = np.einsum("ij,ij->i", bp, bp)
    aqq = np.einsum("ij,ij->i", bq, bq)
    apq = np.einsum("ij,ij->i", bp, bq)
    live = (app > 0.0) & (aqq > 0.0)
    off = np.zeros_like(apq)
    # square roots taken separately so the product cannot under/overflow
    np.divide(np.abs(apq), np.sqrt(app) * np.sqrt(aqq), out=off, where=live)
    rotate = np.flatnonzero(live & (off > _JACOBI_EPS))
    if rotate.size == 0:
        return float(off.max(initial=0.0))
    ps = ps[rotate]
    qs = qs[rotate]
    bp = bp[rotate]
    bq = bq[rotate]
    zeta = (aqq[rotate] - app[rotate]) / (2.0 * apq[rotate])
    t = np.where(
        zeta == 0.0, 1.0, np.sign(zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
    )
    cs = (1.0 / np.sqrt(1.0 + t * t))[:, None]
    sn = cs * t[:, None]
    bt[ps] = cs * bp - sn * bq
    bt[qs] = sn * bp + cs * bq
    vp = vt[ps]
    vq = vt[qs]
    vt[ps] = cs * vp - sn * vq
    vt[qs] = sn * vp + cs * vq
    return float(off.max(initial=0.0))


def singular_values(a: np.ndarray) -> SingularDecomposition:
    """One-sided Jacobi SVD.

    Plane rotations orthogonalize column pairs of the (possibly
    transposed) input, one round-robin round of disjoint pairs at a time,
    until all columns are mutually orthogonal to working precision.
    Raises SvdConvergenceError after 100 sweeps.
    """
    a = validate_matrix(a)
    rows, cols = a.shape
    transposed = rows < cols
    # working columns stored as rows: bt[j] is column j
    bt = (a if transposed else a.T).copy()
    n = bt.shape[0]
    vt = np.eye(n)

    converged = n == 1
    worst = 0.0
    rounds = _round_robin_pairs(n)
    eps_mach = np.finfo(float).eps
    for _ in range(_MAX_SWEEPS):
        if converged:
            break
        # columns below roundoff relative to the largest carry only noise;
        # zero them so their arbitrary mutual angles cannot stall the sweep
        norms = np.linalg.norm(bt, axis=1)
        cutoff = eps_mach * norms.max()
        bt[(norms > 0.0) & (norms <= cutoff)] = 0.0
        worst = 0.0
        for ps, qs in rounds:
            worst = max(worst, _jacobi_round(bt, vt, ps, qs))
        if worst <= _JACOBI_EPS:
            converged = True
    if not converged:
        raise SvdConvergenceError(worst, _MAX_SWEEPS)

    sigma = np.linalg.norm(bt, axis=1)
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    u = bt[order].T
    v = vt[order].T
    u = np.where(sigma > 0.0, u / np.where(sigma > 0.0, sigma, 1.0), 0.0)
    if np.any(sigma == 0.0):
        u = _complete_orthonormal(u, n)

    rank_tol = 1e-10 * (sigma[0] if sigma.size else 0.0) * max(rows, cols)
    if transposed:
        return SingularDecomposition(u=v, singular_values=sigma, v=u, rank_tol=rank_tol)
    return SingularDecomposition(u=u, singular_values=sigma, v=v, rank_tol=rank_tol)


def operator_norm(a: np.ndarray, q: NormTag) -> float:
    """Largest singular value (Q2) or largest absolute row sum (QINF)."""
    a = validate_matrix(a)
    if q is NormTag.QINF:
        return float(np.max(np.sum(np.abs(a), axis=1)))
    return float(singular_values(a).singular_values[0])


def dual_norm(ell: np.ndarray, q: NormTag) -> float:
    """Trace norm (Q2) or sum of per-row absolute maxima (QINF)."""
    ell = validate_matrix(ell)
    if q is NormTag.QINF:
        return float(np.sum(np.max(np.abs(ell), axis=1)))
    return float(np.sum(singular_values(ell).singular_values))


def _sign(x: float) -> float:
    # sgn(0) = +1 by convention
    return 1.0 if x >= 0.0 else -1.0


def duality_map(ell: np.ndarray, q: NormTag) -> np.ndarray:
    """Matrix rho(l) satisfying both duality-map identities for the q norm.

    Q2 replaces the singular values above the numerical-rank threshold
    with the trace norm; QINF picks one entry per row, the absolute
    maximum (smallest column index on ties), with its sign.
    """
    ell = validate_matrix(ell)
    if q is NormTag.QINF:
        scale = dual_norm(ell, q)
        m = np.zeros_like(ell)
        cols = np.argmax(np.abs(ell), axis=1)  # argmax takes smallest index on ties
        for i, j in enumerate(cols):
            m[i, j] = _sign(ell[i, j])
        return scale * m
    dec = singular_values(ell)
    return _spectral_map_from(dec, ell.shape)


def _spectral_map_from(dec: SingularDecomposition, shape: tuple) -> np.ndarray:
    r = dec.rank
    if r == 0:
        return np.zeros(shape)
    scale = float(np.sum(dec.singular_values))
    return scale * (dec.u[:, :r] @ dec.v[:, :r].T)


def dual_pair(ell: np.ndarray, q: NormTag) -> tuple[float, np.ndarray]:
    """Dual norm and duality map from a single decomposition of ell."""
    ell = validate_matrix(ell)
    if q is NormTag.QINF:
        return dual_norm(ell, q), duality_map(ell, q)
    dec = singular_values(ell)
    return float(np.sum(dec.singular_values)), _spectral_map_from(dec, ell.shape)
