"""Compensator synthesis for one agent at a given root estimate.

The compensator is ``xi' = E xi + F e``, ``u = K xi`` with state
``xi = [observer state; internal model state]``.  ``L`` places the observer
on the nominal pair, ``K = [K1 K2]`` stabilizes the nominal plant augmented
by the q-copy internal model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import matops
from .internal_model import build_internal_model
from .matops import PlacementError
from .plant import AgentModel


class SynthesisError(ValueError):
    pass


def augmented_pair(agent: AgentModel, G, H) -> tuple[np.ndarray, np.ndarray]:
    """``([A0 0; H C0 G], [B0; H D0])`` on nominal matrices."""
    n, kq = agent.n, G.shape[0]
    Abar = np.block([[agent.A, np.zeros((n, kq))], [H @ agent.C, G]])
    Bbar = np.vstack([agent.B, H @ agent.D])
    return Abar, Bbar


def augmented_stabilizable(agent: AgentModel, lam, tol: float = matops.RANK_TOL) -> bool:
    """PBH test on the augmented pair at every closed-RHP eigenvalue."""
    im = build_internal_model(lam, agent.q)
    Abar, Bbar = augmented_pair(agent, im.G, im.H)
    return matops.is_stabilizable(Abar, Bbar, tol)


def rosenbrock_rank_condition(agent: AgentModel, lam, tol: float = matops.RANK_TOL) -> bool:
    """Full row rank ``n + q`` of the Rosenbrock matrix at every entry of ``lam``."""
    full = agent.n + agent.q
    return all(matops.numerical_rank(agent.rosenbrock(s), tol) == full for s in np.unique(np.asarray(lam)))


@dataclass(frozen=True, eq=False)
class CompensatorGains:
    agent: AgentModel
    lam_at: np.ndarray
    L: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    G: np.ndarray
    H: np.ndarray
    E: np.ndarray
    F: np.ndarray
    observer_poles: tuple
    state_poles: tuple
    method: str = ""

    @property
    def K(self) -> np.ndarray:
        return np.hstack([self.K1, self.K2])


def observer_gain(agent: AgentModel, poles) -> np.ndarray:
    """``L`` with ``eig(A0 - L C0)`` at ``poles``."""
    Kd = matops.place_poles(agent.A.T, agent.C.T, poles)
    return -Kd.T


def compensator_matrices(agent: AgentModel, L, K, G, H) -> tuple[np.ndarray, np.ndarray]:
    n = agent.n
    E = scipy.linalg.block_diag(agent.A - L @ agent.C, G)
    E[:n] += (agent.B - L @ agent.D) @ K
    F = np.vstack([L, H])
    return E, F


def synthesize_gains(agent: AgentModel, lam, observer_poles, state_poles, L=None,
                     verify_tol: float = 1e-6, precheck: bool = True, prefer: str | None = None) -> CompensatorGains:
    """Observer and state-feedback gains for the root estimate ``lam``.

    ``L`` does not depend on ``lam``; pass a previously computed one to skip
    the observer placement.  ``prefer`` names the placement method to try
    first (see :func:`matops.place_poles_method`).
    """
    lam = np.asarray(lam, dtype=complex).ravel()
    if L is None:
        if not matops.is_detectable(agent.C, agent.A):
            raise SynthesisError("(C0, A0) is not detectable")
        L = observer_gain(agent, observer_poles)
    im = build_internal_model(lam, agent.q)
    Abar, Bbar = augmented_pair(agent, im.G, im.H)
    try:
        K, method = matops.place_poles_method(Abar, Bbar, state_poles, verify_tol, precheck, prefer)
    except PlacementError as exc:
        raise SynthesisError(f"augmented pair at lambda={np.round(lam, 6)}: {exc}") from exc
    n = agent.n
    E, F = compensator_matrices(agent, L, K, im.G, im.H)
    return CompensatorGains(agent, lam, L, K[:, :n], K[:, n:], im.G, im.H, E, F,
                            tuple(observer_poles or ()), tuple(state_poles), method)


def gain_cache_update(gains: CompensatorGains, lam_now, tol: float, precheck: bool = True) -> CompensatorGains:
    """Reuse ``gains`` unless the root estimate has moved by more than ``tol``."""
    lam_now = np.asarray(lam_now, dtype=complex).ravel()
    if np.max(np.abs(lam_now - gains.lam_at), initial=0.0) <= tol:
        return gains
    return synthesize_gains(gains.agent, lam_now, gains.observer_poles, gains.state_poles, L=gains.L,
                            precheck=precheck, prefer=gains.method)


@dataclass(frozen=True)
class ClosedLoopMonitor:
    M: np.ndarray
    M0: np.ndarray
    dM: np.ndarray
    margin: float

    @property
    def stable(self) -> bool:
        return self.margin < 0


def closed_loop_matrix(mats, L, K, G, H, nominal: AgentModel) -> np.ndarray:
    """``[[A, B K], [F C, E + F D K]]`` for plant matrices ``mats = (A, B, C, D)``."""
    A, B, C, D = mats
    E, F = compensator_matrices(nominal, L, K, G, H)
    return np.block([[A, B @ K], [F @ C, E + F @ D @ K]])


def assemble_closed_loop(agent: AgentModel, gains: CompensatorGains, lam=None) -> ClosedLoopMonitor:
    """Closed loop of plant and compensator, nominal part and uncertainty part.

    ``lam`` overrides the internal model while keeping the cached ``K``.
    """
    G, H = gains.G, gains.H
    if lam is not None:
        im = build_internal_model(lam, agent.q)
        G, H = im.G, im.H
    K = gains.K
    eff = agent.effective_matrices()[:4]
    M = closed_loop_matrix(eff, gains.L, K, G, H, agent)
    M0 = closed_loop_matrix(agent.nominal()[:4], gains.L, K, G, H, agent)
    return ClosedLoopMonitor(M, M0, M - M0, matops.spectral_abscissa(M))


def uncertainty_block(agent: AgentModel, gains: CompensatorGains) -> np.ndarray:
    """The uncertainty part of the closed loop built directly from the deltas.

    Rows are ordered plant state, observer state, internal model state.
    """
    dA, dB, dC, dD = agent.deltas()[:4]
    F = gains.F
    K = gains.K
    return np.block([[dA, dB @ K], [F @ dC, F @ dD @ K]])
