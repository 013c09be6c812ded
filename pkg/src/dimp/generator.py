"""Distributed exosystem generator.

Every node runs the same rule: pull its local ``S`` and ``w`` toward its
in-neighbours while propagating ``w`` through its own ``S``.  The exosystem,
when present, is simply a node with no in-edges, so ``S0`` stays constant
and ``w0' = S0 w0`` falls out of the same formula.
"""

from __future__ import annotations

import numpy as np

from .internal_model import batch_coefficients, minimal_polynomial_roots


class GeneratorError(ValueError):
    pass


def _pull(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    # sum_j a_ij (x_j - x_i) over the leading node axis
    flat = x.reshape(x.shape[0], -1)
    out = adj @ flat - adj.sum(axis=1)[:, None] * flat
    return out.reshape(x.shape)


def generator_derivatives(S, w, adjacency) -> tuple[np.ndarray, np.ndarray]:
    """Vector fields for stacked ``S`` (nodes x r x r) and ``w`` (nodes x r)."""
    S = np.asarray(S, dtype=float)
    w = np.asarray(w, dtype=float)
    a = np.asarray(adjacency, dtype=float)
    dS = _pull(a, S)
    dw = np.einsum("nij,nj->ni", S, w) + _pull(a, w)
    return dS, dw


def sync_reference_derivatives(S, w, Q, adjacency) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Generator fields plus consensus on the output maps ``Q`` (nodes x q x r)."""
    dS, dw = generator_derivatives(S, w, adjacency)
    return dS, dw, _pull(np.asarray(adjacency, dtype=float), np.asarray(Q, dtype=float))


def check_rooted_initial(S_init, roots_idx, tol: float = 0.0) -> np.ndarray:
    """Common initial ``S`` of the root set; raises when the roots disagree."""
    S_init = np.asarray(S_init, dtype=float)
    ref = S_init[roots_idx[0]]
    for i in roots_idx[1:]:
        if np.max(np.abs(S_init[i] - ref)) > tol:
            raise GeneratorError("the agents in the root set must share the same initial S")
    return ref


def is_companion(S, tol: float = 0.0) -> bool:
    S = np.asarray(S, dtype=float)
    k = S.shape[0]
    if k == 0:
        return False
    pattern = np.zeros((k, k))
    pattern[:-1, 1:] = np.eye(k - 1)
    return bool(np.max(np.abs(S[:-1] - pattern[:-1]), initial=0.0) <= tol)


def companion_mode_reduction(S0) -> tuple[bool, np.ndarray | None]:
    """Whether agents can exchange root estimates instead of whole matrices.

    Applies when ``S0`` is already a companion matrix whose minimal and
    characteristic polynomials coincide.  Returns the flag and the reduced
    imaginary-part payload.
    """
    S0 = np.asarray(S0, dtype=float)
    if not is_companion(S0):
        return False, None
    roots = minimal_polynomial_roots(S0)
    if roots.size != S0.shape[0]:
        return False, None
    return True, roots.imag[: roots.size // 2].copy()


def companion_from_reduced(bh, k: int) -> np.ndarray:
    """Companion matrix with roots ``+-j bh`` (and ``0`` for odd ``k``), stacked over rows."""
    bh = np.atleast_2d(np.asarray(bh, dtype=float))
    lam = np.concatenate([1j * bh, -1j * bh] + ([np.zeros((bh.shape[0], 1))] if k % 2 else []), axis=1)
    c = batch_coefficients(lam)
    out = np.zeros((bh.shape[0], k, k))
    out[:, :-1, 1:] = np.eye(k - 1)
    out[:, -1, :] = -c
    return out


def reference_error(w, S, exo_index: int = 0) -> tuple[float, float]:
    """Worst ``|w_i - w_0|`` and ``|S_i - S_0|`` over agents (infinity norms)."""
    w = np.asarray(w)
    S = np.asarray(S)
    dw = np.abs(w - w[exo_index]).max()
    dS = np.abs(S - S[exo_index]).max()
    return float(dw), float(dS)
