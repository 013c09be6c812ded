"""Dense matrix kernel shared by the rest of the package.

Eigenvalues, numerical rank, polynomial expansion, Sylvester solves and
stabilizing-gain synthesis.  Everything here is a pure function of its
arguments.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.linalg
import scipy.signal
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)

CONJ_TOL = 1e-9
RANK_TOL = 1e-8


class MatrixError(ValueError):
    """Raised for malformed input or a failed numerical kernel."""


class SylvesterError(MatrixError):
    """The Sylvester equation has no unique solution."""


class PlacementError(MatrixError):
    """Pole placement was impossible or failed verification."""


def as_matrix(m, name="matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(m))
    if a.ndim != 2:
        raise MatrixError(f"{name}: expected a 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise MatrixError(f"{name}: non-finite entries")
    return a


def _square(m, name="matrix") -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise MatrixError(f"{name}: expected a square matrix, got shape {a.shape}")
    return a


def _pair_conjugates(ev: np.ndarray, tol: float) -> np.ndarray:
    # Replace each lower-half eigenvalue by the exact conjugate of its partner.
    ev = ev.astype(complex).copy()
    upper = [i for i in range(ev.size) if ev[i].imag > tol]
    lower = [i for i in range(ev.size) if ev[i].imag < -tol]
    if len(upper) != len(lower):
        raise MatrixError("eigenvalues of a real matrix are not closed under conjugation")
    if upper:
        cost = np.abs(ev[upper][:, None] - np.conj(ev[lower])[None, :])
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            ev[lower[c]] = np.conj(ev[upper[r]])
    for i in range(ev.size):
        if abs(ev[i].imag) <= tol:
            ev[i] = ev[i].real
    return ev


def eig(m, tol: float = CONJ_TOL) -> np.ndarray:
    """Eigenvalues with multiplicity.

    For real input the result is closed under conjugation exactly; eigenvalues
    whose imaginary part is within ``tol`` of zero are reported as real.  The
    order is descending imaginary part, then ascending real part.
    """
    a = _square(m)
    if a.size == 0:
        return np.zeros(0, dtype=complex)
    try:
        ev = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(
            f"eigenvalue iteration did not converge for a {a.shape[0]}x{a.shape[0]} matrix"
        ) from exc
    if np.isrealobj(a):
        ev = _pair_conjugates(ev, tol)
    ev = np.asarray(ev, dtype=complex)
    order = np.lexsort((ev.real, -ev.imag))
    return ev[order]


def numerical_rank(m, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise MatrixError("tol must be positive")
    a = np.atleast_2d(np.asarray(m))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def is_stable(m, margin: float = 0.0) -> bool:
    """True iff every eigenvalue has real part below ``-margin``."""
    ev = eig(m)
    if ev.size == 0:
        return True
    return bool(np.max(ev.real) < -margin)


def spectral_abscissa(m) -> float:
    ev = np.linalg.eigvals(_square(m))
    return float(np.max(ev.real)) if ev.size else -np.inf


def is_conjugate_closed(values, tol: float = 1e-8) -> bool:
    v = np.asarray(values, dtype=complex).ravel()
    if v.size == 0:
        return True
    cost = np.abs(v[:, None] - np.conj(v)[None, :])
    rows, cols = linear_sum_assignment(cost)
    return bool(np.max(cost[rows, cols]) <= tol * max(1.0, np.max(np.abs(v))))


def coefficients_from_roots(roots, real: bool | None = None, tol: float = 1e-8) -> np.ndarray:
    """Expand the monic polynomial with the given roots.

    Returns ``[c_k, ..., c_1]`` for ``s^k + c_1 s^(k-1) + ... + c_k`` (constant
    term first, leading one dropped).  With ``real=True`` the roots must be
    closed under conjugation and the imaginary residue is truncated to zero;
    ``real=None`` truncates whenever that closure holds.
    """
    r = np.asarray(roots, dtype=complex).ravel()
    if not np.all(np.isfinite(r)):
        raise MatrixError("roots must be finite")
    p = np.zeros(r.size + 1, dtype=complex)  # descending powers
    p[0] = 1.0
    for j, root in enumerate(r):
        p[1:j + 2] -= root * p[:j + 1]
    coeffs = p[1:][::-1]
    closed = is_conjugate_closed(r, tol)
    if real and not closed:
        raise MatrixError("roots are not closed under conjugation")
    if real or (real is None and closed):
        scale = max(1.0, float(np.max(np.abs(coeffs))) if coeffs.size else 1.0)
        if coeffs.size and np.max(np.abs(coeffs.imag)) > tol * scale:
            raise MatrixError("imaginary coefficient residue exceeds tolerance")
        return coeffs.real.copy()
    return coeffs


def companion(coeffs) -> np.ndarray:
    """Controllable companion matrix with last row ``-[c_k, ..., c_1]``."""
    c = np.asarray(coeffs)
    k = c.size
    out = np.zeros((k, k), dtype=c.dtype if k else float)
    if k:
        out[:-1, 1:] = np.eye(k - 1)
        out[-1, :] = -c
    return out


def polyval_matrix(coeffs, S) -> np.ndarray:
    """Evaluate the monic polynomial (ascending coefficients ``[c_k..c_1]``) at ``S``."""
    c = np.asarray(coeffs)
    S = np.asarray(S)
    # Horner on descending coefficients 1, c_1, ..., c_k
    desc = np.concatenate([[1.0], c[::-1]])
    out = np.zeros_like(S, dtype=np.result_type(S, c, float))
    eye = np.eye(S.shape[0])
    for a in desc:
        out = out @ S + a * eye
    return out


def solve_sylvester(A, B, C, gap_tol: float = 1e-9) -> np.ndarray:
    """Solve ``X @ B = A @ X + C`` for ``X`` through the Kronecker form.

    Raises SylvesterError naming the offending pair when the spectra of ``A``
    and ``B`` come within ``gap_tol`` (relative) of each other.
    """
    A = _square(A, "A")
    B = _square(B, "B")
    C = as_matrix(C, "C")
    n, r = A.shape[0], B.shape[0]
    if C.shape != (n, r):
        raise MatrixError(f"C: expected shape {(n, r)}, got {C.shape}")
    ea, eb = np.linalg.eigvals(A), np.linalg.eigvals(B)
    if ea.size and eb.size:
        gap = np.abs(ea[:, None] - eb[None, :])
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        if gap[i, j] <= gap_tol * (1.0 + abs(ea[i])):
            raise SylvesterError(
                f"no unique solution: eigenvalue {ea[i]:.6g} of A coincides with {eb[j]:.6g} of B"
            )
    # vec(A X - X B) = (I_r (x) A - B^T (x) I_n) vec(X), column-major vec
    op = np.kron(np.eye(r), A) - np.kron(B.T, np.eye(n))
    x = np.linalg.solve(op, -C.reshape(-1, order="F"))
    return x.reshape((n, r), order="F")


def uncontrollable_modes(A, B, tol: float = RANK_TOL, closed_rhp_only: bool = False) -> list[complex]:
    """Eigenvalues of ``A`` at which the PBH matrix ``[A - sI, B]`` loses rank."""
    A = _square(A, "A")
    B = as_matrix(B, "B")
    n = A.shape[0]
    bad = []
    for s in np.unique(np.round(eig(A), 12)):
        if closed_rhp_only and s.real < -tol:
            continue
        if numerical_rank(np.hstack([A - s * np.eye(n), B]), tol) < n:
            bad.append(complex(s))
    return bad


def is_stabilizable(A, B, tol: float = RANK_TOL) -> bool:
    return not uncontrollable_modes(A, B, tol, closed_rhp_only=True)


def is_detectable(C, A, tol: float = RANK_TOL) -> bool:
    return is_stabilizable(np.asarray(A).T, np.asarray(C).T, tol)


def match_spectra(actual, desired) -> float:
    """Largest distance under the best one-to-one pairing of two spectra."""
    a = np.asarray(actual, dtype=complex).ravel()
    d = np.asarray(desired, dtype=complex).ravel()
    if a.size != d.size:
        return np.inf
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - d[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


def _ackermann(A, b, desired) -> np.ndarray:
    n = A.shape[0]
    ctrb = np.empty((n, n))
    col = b[:, 0]
    for i in range(n):
        ctrb[:, i] = col
        col = A @ col
    coeffs = coefficients_from_roots(desired, real=True)
    pA = polyval_matrix(coeffs, A)
    last = np.linalg.solve(ctrb.T, np.eye(n)[:, -1])
    return -(last @ pA)[None, :]


def _check_desired(desired, n) -> np.ndarray:
    d = np.asarray(desired, dtype=complex).ravel()
    if d.size != n:
        raise PlacementError(f"need {n} desired poles, got {d.size}")
    if not is_conjugate_closed(d):
        raise PlacementError("desired poles are not closed under conjugation")
    if np.any(d.real >= 0):
        raise PlacementError("desired poles must lie in the open left half-plane")
    return d


def _lqr_gain(A, B, decay: float) -> np.ndarray:
    n, m = B.shape
    shifted = A + decay * np.eye(n)
    X = scipy.linalg.solve_continuous_are(shifted, B, np.eye(n), np.eye(m))
    return -B.T @ X


PROJECTION_DRAWS = 10
PROJECTION_SEED = 20190101


def place_poles(A, B, desired, verify_tol: float = 1e-6, precheck: bool = True) -> np.ndarray:
    """Gain ``K`` with ``eig(A + B @ K)`` equal to ``desired``.

    Single input uses Ackermann's formula.  Multiple inputs try, in order: a
    fixed-seed sequence of single-column projections ``B v`` placed by
    Ackermann (``K = v k``), the Yang-Tits method, and finally a shifted LQR
    gain that is only guaranteed to be stabilizing with decay rate at least
    ``min |Re(desired)|``.

    ``precheck=False`` skips the up-front PBH test; an uncontrollable pair
    then surfaces as a verification failure instead.
    """
    return place_poles_method(A, B, desired, verify_tol, precheck)[0]


def _try_projections(A, B, d, verify_tol):
    m = B.shape[1]
    rng = np.random.default_rng(PROJECTION_SEED)
    for _ in range(PROJECTION_DRAWS):
        v = rng.standard_normal((m, 1))
        v /= np.linalg.norm(v)
        if uncontrollable_modes(A, B @ v):
            continue
        K = v @ _ackermann(A, B @ v, d)
        if match_spectra(np.linalg.eigvals(A + B @ K), d) <= verify_tol:
            return K
    return None


def _try_yt(A, B, d, verify_tol):
    try:
        with warnings.catch_warnings():
            # YT reports non-convergence of its robustness objective; placement is still exact
            warnings.simplefilter("ignore", UserWarning)
            res = scipy.signal.place_poles(A, B, d, method="YT", maxiter=1)
    except (ValueError, np.linalg.LinAlgError):
        return None
    K = -np.asarray(res.gain_matrix)
    if match_spectra(np.linalg.eigvals(A + B @ K), d) <= verify_tol:
        return K
    return None


def place_poles_method(A, B, desired, verify_tol: float = 1e-6, precheck: bool = True,
                       prefer: str | None = None) -> tuple[np.ndarray, str]:
    """Like :func:`place_poles`, also naming the method that succeeded.

    The name is one of ``"ackermann"``, ``"projection"``, ``"yt"`` or
    ``"lqr"``.  ``prefer`` moves one multi-input method to the front, which
    saves the failed attempts when the same pair is placed repeatedly.
    """
    A = _square(A, "A")
    B = as_matrix(B, "B").astype(float)
    n, m = B.shape
    if A.shape[0] != n:
        raise MatrixError(f"B: expected {A.shape[0]} rows, got {n}")
    d = _check_desired(desired, n)
    bad = uncontrollable_modes(A, B) if precheck else []
    if bad:
        kind = "unstabilizable" if any(s.real >= 0 for s in bad) else "uncontrollable"
        raise PlacementError(f"{kind} pair: PBH rank test fails at eigenvalue {bad[0]:.6g}")

    if m == 1:
        try:
            K = _ackermann(A, B, d)
        except np.linalg.LinAlgError as exc:
            raise PlacementError("uncontrollable pair: singular controllability matrix") from exc
        err = match_spectra(np.linalg.eigvals(A + B @ K), d)
        if err > verify_tol:
            raise PlacementError(f"placement verification failed (error {err:.3g})")
        return K, "ackermann"

    order = [("projection", _try_projections), ("yt", _try_yt)]
    if prefer == "yt":
        order.reverse()
    for name, attempt in order:
        K = attempt(A, B, d, verify_tol)
        if K is not None:
            return K, name

    decay = float(np.min(np.abs(d.real)))
    log.info("exact placement unavailable; falling back to LQR with decay %.3g", decay)
    K = _lqr_gain(A, B, decay)
    if not is_stable(A + B @ K):
        raise PlacementError("LQR fallback failed to stabilize")
    return K, "lqr"
