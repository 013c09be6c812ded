"""Root estimation, zero avoidance and the q-copy internal model.

Each agent tracks the roots ``lambda`` of the exosystem's minimal polynomial
as ``alpha + j beta``.  The imaginary parts ``beta`` follow a consensus flow;
the real parts ``alpha`` are an algebraic function of ``beta`` that lifts the
estimate onto a semicircle of radius ``rho`` whenever it comes near an
imaginary-axis transmission zero.

Entry order matters because consensus acts entrywise.  The canonical order
used throughout is

    upper-half roots (descending imaginary part), first half of the real
    roots, conjugates of the upper-half roots, second half of the real
    roots, and the leftover real root when their count is odd.

This makes the full vector ``[bh; -bh]`` (even ``k``) or ``[bh; -bh; 0]``
(odd ``k``) for a reduced vector ``bh`` of length ``k // 2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matops
from .matops import MatrixError
from .plant import ZeroSet

CLUSTER_TOL = 1e-6
ANNIHILATE_TOL = 1e-7


class AvoidanceError(ValueError):
    """A transmission zero sits on the exosystem spectrum."""


def _clusters(ev: np.ndarray, tol: float) -> list[tuple[complex, int]]:
    out: list[list] = []
    for z in ev:
        for c in out:
            if abs(c[0] - z) <= tol * max(1.0, abs(z)):
                c[1].append(z)
                break
        else:
            out.append([z, [z]])
    return [(complex(np.mean(zs)), len(zs)) for _, zs in out]


def _canonical(roots: list[complex], tol: float = CLUSTER_TOL) -> np.ndarray:
    upper = sorted((z for z in roots if z.imag > tol), key=lambda z: (-z.imag, z.real))
    real = sorted((complex(z.real, 0.0) for z in roots if abs(z.imag) <= tol), key=lambda z: z.real)
    lower = [np.conj(z) for z in upper]
    h = len(real) // 2
    return np.array(upper + real[:h] + lower + real[h:2 * h] + real[2 * h:], dtype=complex)


def minimal_polynomial_roots(S, tol: float = ANNIHILATE_TOL) -> np.ndarray:
    """Roots of the minimal polynomial of ``S`` with multiplicity, canonically ordered.

    Examples
    --------
    >>> minimal_polynomial_roots([[0, 2], [-2, 0]])
    array([0.+2.j, 0.-2.j])
    """
    S = matops._square(np.asarray(S, dtype=float), "S")
    r = S.shape[0]
    clusters = _clusters(matops.eig(S), CLUSTER_TOL)
    scale = max(np.linalg.norm(S, 2), 1.0)
    eye = np.eye(r)
    # index of mu: smallest j with rank (S - mu I)^j = r - multiplicity
    idx = []
    for mu, mult in clusters:
        N = S - mu * eye
        Pw = eye.astype(complex)
        for j in range(1, mult + 1):
            Pw = Pw @ N
            if matops.numerical_rank(Pw, 1e-7) <= r - mult:
                break
        idx.append(j)
    for attempt in (idx, [m for _, m in clusters]):
        roots = [mu for (mu, _), j in zip(clusters, attempt) for _ in range(j)]
        roots = [complex(z.real, 0.0) if abs(z.imag) <= CLUSTER_TOL else z for z in roots]
        coeffs = matops.coefficients_from_roots(roots)
        resid = np.linalg.norm(matops.polyval_matrix(coeffs, S), 2)
        if resid <= tol * scale ** len(roots):
            return _canonical(roots)
    raise MatrixError(f"minimal polynomial search failed (residual {resid:.3g}); please report this matrix")


def reduced_length(k: int) -> int:
    return k // 2


def expand_beta(bh, k: int) -> np.ndarray:
    """Full ``beta`` from the reduced vector; works on the last axis."""
    bh = np.asarray(bh, dtype=float)
    parts = [bh, -bh]
    if k % 2:
        parts.append(np.zeros(bh.shape[:-1] + (1,)))
    return np.concatenate(parts, axis=-1)


def reduce_beta(beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    return beta[..., : beta.shape[-1] // 2].copy()


def consensus_step_beta(beta, adjacency, fixed=None) -> np.ndarray:
    """Consensus vector field ``sum_j a_ij (beta_j - beta_i)`` for stacked rows.

    ``beta`` has one row per node.  Rows listed in ``fixed`` get zero
    derivative (the exosystem node).
    """
    b = np.asarray(beta, dtype=float)
    a = np.asarray(adjacency, dtype=float)
    d = a @ b - a.sum(axis=1)[:, None] * b
    if fixed is not None:
        d[list(np.atleast_1d(fixed))] = 0.0
    return d


def dist(c1, c2) -> float:
    """Smallest pairwise distance between two point sets (``inf`` if either is empty)."""
    a = np.asarray(list(c1), dtype=complex).ravel()
    b = np.asarray(list(c2), dtype=complex).ravel()
    if a.size == 0 or b.size == 0:
        return np.inf
    return float(np.min(np.abs(a[:, None] - b[None, :])))


def gamma(beta_d, pi_tilde) -> float:
    """Distance from ``j beta_d`` to the imaginary-axis zeros (0 when there are none)."""
    pt = list(pi_tilde)
    if not pt:
        return 0.0
    return dist([1j * float(beta_d)], pt)


def alpha(g: float, rho: float, exosystem: bool = False) -> float:
    if exosystem or g >= rho:
        return 0.0
    return float(np.sqrt(rho * rho - g * g))


def semicircle_radius(sigma_s0, zeros: ZeroSet, coeff: float = 0.5, tol: float = 1e-9) -> float:
    """Radius of the avoidance semicircle around the imaginary-axis zeros.

    ``coeff`` must lie in ``(0, 1)``; the usual choice is one half.
    """
    if not 0.0 < coeff < 1.0:
        raise ValueError("rho coefficient must lie in (0, 1)")
    pt = list(zeros.pi_tilde)
    if not pt:
        return 0.0
    d_exo = dist(sigma_s0, pt)
    if d_exo <= tol:
        raise AvoidanceError("an imaginary-axis transmission zero coincides with an exosystem eigenvalue")
    rest = zeros.pi_open
    if not rest:
        return coeff * d_exo
    return coeff * min(d_exo, dist(rest, pt))


@dataclass(frozen=True)
class AvoidanceGeometry:
    rho: float
    pi_tilde: tuple
    pi_open: tuple

    def gammas(self, bh) -> np.ndarray:
        bh = np.atleast_1d(np.asarray(bh, dtype=float))
        return np.array([gamma(b, self.pi_tilde) for b in bh])

    def alphas(self, bh, exosystem: bool = False) -> np.ndarray:
        return np.array([alpha(g, self.rho, exosystem) for g in self.gammas(bh)])


def geometry_for(sigma_s0, zeros: ZeroSet, coeff: float = 0.5, rho: float | None = None) -> AvoidanceGeometry:
    r = semicircle_radius(sigma_s0, zeros, coeff) if rho is None else float(rho)
    return AvoidanceGeometry(r, tuple(zeros.pi_tilde), tuple(zeros.pi_open))


def lambda_from_reduced(bh, geom: AvoidanceGeometry, k: int, exosystem: bool = False) -> np.ndarray:
    """Full ``lambda`` from the reduced imaginary parts.

    ``gamma`` is evaluated once per reduced entry and shared with its mirror
    entry, which keeps the estimate exactly closed under conjugation.
    """
    bh = np.atleast_1d(np.asarray(bh, dtype=float))
    a = geom.alphas(bh, exosystem)
    lam = np.concatenate([a + 1j * bh, a - 1j * bh])
    if k % 2:
        lam = np.append(lam, alpha(gamma(0.0, geom.pi_tilde), geom.rho, exosystem))
    return lam


@dataclass(frozen=True)
class InternalModelRealization:
    coeffs: np.ndarray
    Gp: np.ndarray
    Hp: np.ndarray
    G: np.ndarray
    H: np.ndarray


def build_internal_model(lam, q: int) -> InternalModelRealization:
    lam = np.asarray(lam, dtype=complex).ravel()
    coeffs = matops.coefficients_from_roots(lam, real=True)
    Gp = matops.companion(coeffs)
    Hp = np.zeros((lam.size, 1))
    Hp[-1, 0] = 1.0
    return InternalModelRealization(coeffs, Gp, Hp, np.kron(np.eye(q), Gp), np.kron(np.eye(q), Hp))


def batch_coefficients(lam) -> np.ndarray:
    """Real companion coefficients ``[c_k..c_1]`` for each row of conjugate-closed roots."""
    lam = np.asarray(lam, dtype=complex)
    n, k = lam.shape
    desc = np.ones((n, 1), dtype=complex)
    for d in range(k):
        nxt = np.zeros((n, desc.shape[1] + 1), dtype=complex)
        nxt[:, :-1] = desc
        nxt[:, 1:] -= lam[:, d, None] * desc
        desc = nxt
    return desc[:, 1:][:, ::-1].real.copy()


def batch_alpha(bh, rho, pi_tilde_padded) -> np.ndarray:
    """Vectorized ``alpha`` for stacked reduced vectors.

    ``pi_tilde_padded`` has one row per node, padded with ``inf``.
    """
    bh = np.asarray(bh, dtype=float)
    if pi_tilde_padded.shape[1] == 0:
        return np.zeros_like(bh)
    g = np.min(np.abs(1j * bh[:, :, None] - pi_tilde_padded[:, None, :]), axis=2)
    g = np.where(np.isfinite(g), g, 0.0)
    rho = np.asarray(rho, dtype=float)[:, None]
    return np.where(g < rho, np.sqrt(np.maximum(rho * rho - g * g, 0.0)), 0.0)
