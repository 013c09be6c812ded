"""Agent and exosystem models, transmission zeros and standing-assumption checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import matops
from .matops import MatrixError

IMAG_TOL = 1e-7
ZERO_SEED = 7


class ModelError(ValueError):
    pass


_NAMES = ("A", "B", "C", "D", "P", "Q")


@dataclass(frozen=True, eq=False)
class AgentModel:
    """Linear agent ``x' = Ax + Bu + Pw``, ``z = Cx + Du + Qw``.

    Each matrix is the nominal part plus an uncertainty part; controller
    synthesis only sees the nominal part.  ``P`` and ``Q`` may have zero
    columns (synchronization agents have no exosystem input).
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    P: np.ndarray | None = None
    Q: np.ndarray | None = None
    dA: np.ndarray | None = None
    dB: np.ndarray | None = None
    dC: np.ndarray | None = None
    dD: np.ndarray | None = None
    dP: np.ndarray | None = None
    dQ: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n, m, q = A.shape[0], B.shape[1], C.shape[0]
        P = np.zeros((n, 0)) if self.P is None else np.atleast_2d(np.asarray(self.P, dtype=float))
        Q = np.zeros((q, P.shape[1])) if self.Q is None else np.atleast_2d(np.asarray(self.Q, dtype=float))
        r = P.shape[1]
        shapes = {"A": (n, n), "B": (n, m), "C": (q, n), "D": (q, m), "P": (n, r), "Q": (q, r)}
        nominal = dict(zip(_NAMES, (A, B, C, D, P, Q)))
        for name, mat in nominal.items():
            if mat.shape != shapes[name]:
                raise ModelError(f"{name}: expected shape {shapes[name]}, got {mat.shape}")
            object.__setattr__(self, name, mat)
        for name in _NAMES:
            d = getattr(self, "d" + name)
            d = np.zeros(shapes[name]) if d is None else np.atleast_2d(np.asarray(d, dtype=float))
            if d.shape != shapes[name]:
                raise ModelError(f"d{name}: expected shape {shapes[name]}, got {d.shape}")
            object.__setattr__(self, "d" + name, d)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def q(self) -> int:
        return self.C.shape[0]

    @property
    def r(self) -> int:
        return self.P.shape[1]

    def nominal(self) -> tuple:
        return self.A, self.B, self.C, self.D, self.P, self.Q

    def deltas(self) -> tuple:
        return self.dA, self.dB, self.dC, self.dD, self.dP, self.dQ

    def effective_matrices(self) -> tuple:
        """Nominal plus uncertainty, in the order ``(A, B, C, D, P, Q)``."""
        return tuple(a + d for a, d in zip(self.nominal(), self.deltas()))

    def without_uncertainty(self) -> "AgentModel":
        return AgentModel(*self.nominal())

    def rosenbrock(self, s: complex) -> np.ndarray:
        """``[[A - sI, B], [C, D]]`` on the nominal matrices."""
        return np.block([[self.A - s * np.eye(self.n), self.B], [self.C, self.D]])


@dataclass(frozen=True)
class ExosystemModel:
    S0: np.ndarray
    w0: np.ndarray | None = None

    def __post_init__(self):
        S = matops._square(np.asarray(self.S0, dtype=float), "S0")
        object.__setattr__(self, "S0", S)
        w = np.zeros(S.shape[0]) if self.w0 is None else np.asarray(self.w0, dtype=float).ravel()
        if w.size != S.shape[0]:
            raise ModelError(f"w0: expected length {S.shape[0]}, got {w.size}")
        object.__setattr__(self, "w0", w)

    @property
    def r(self) -> int:
        return self.S0.shape[0]

    def spectrum(self) -> np.ndarray:
        return matops.eig(self.S0)

    def imaginary_spectrum(self, tol: float = IMAG_TOL) -> bool:
        return bool(np.all(np.abs(self.spectrum().real) <= tol))


@dataclass(frozen=True)
class ZeroSet:
    """Transmission zeros, split into the closed right half-plane and the imaginary axis."""

    zeros: tuple
    pi: tuple
    pi_tilde: tuple
    tol: float = IMAG_TOL

    @property
    def pi_open(self) -> tuple:
        """Closed-RHP zeros off the imaginary axis."""
        return tuple(z for z in self.pi if abs(z.real) > self.tol)


def _snap(z: complex, tol: float) -> complex:
    re = 0.0 if abs(z.real) <= tol else z.real
    im = 0.0 if abs(z.imag) <= tol else z.imag
    return complex(re, im)


def _square_zeros(A, B, C, D) -> np.ndarray:
    n = A.shape[0]
    a = np.block([[A, B], [C, D]])
    b = np.zeros_like(a)
    b[:n, :n] = np.eye(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        ev = scipy.linalg.eigvals(a, b)
    ev = ev[np.isfinite(ev)]
    # infinite eigenvalues sometimes come back as huge finite numbers
    scale = 1.0 + np.linalg.norm(a, 1)
    return ev[np.abs(ev) < 1e8 * scale]


def transmission_zeros(agent: AgentModel, tol: float = IMAG_TOL, rank_tol: float = 1e-7) -> ZeroSet:
    """Finite transmission zeros of the nominal agent.

    Square systems use the generalized eigenvalues of the Rosenbrock pencil.
    Wide systems (more inputs than outputs) compress the inputs with two
    seeded random right factors and keep the zeros common to both.  Every
    candidate is re-verified by a rank test on the Rosenbrock matrix.
    """
    A, B, C, D = agent.A, agent.B, agent.C, agent.D
    n, m, q = agent.n, agent.m, agent.q
    if q > m:
        raise ModelError(f"agent has more outputs ({q}) than inputs ({m}); the rank condition can never hold")
    rng = np.random.default_rng(ZERO_SEED)
    probe = complex(rng.standard_normal(), rng.standard_normal())
    if matops.numerical_rank(agent.rosenbrock(probe), rank_tol) < n + q:
        raise ModelError("no finite zeros determinable: the system pencil is rank deficient everywhere")
    if m == q:
        cand = _square_zeros(A, B, C, D)
    else:
        sets = []
        for _ in range(2):
            W = rng.standard_normal((m, q))
            sets.append(_square_zeros(A, B @ W, C, D @ W))
        cand = np.array([z for z in sets[0] if sets[1].size and np.min(np.abs(sets[1] - z)) < 1e-6 * (1 + abs(z))])
    zeros = []
    for z in cand:
        z = _snap(complex(z), tol)
        if matops.numerical_rank(agent.rosenbrock(z), rank_tol) < n + q:
            zeros.append(z)
    if zeros and matops.is_conjugate_closed(zeros, 1e-6):
        zeros = [complex(z) for z in matops._pair_conjugates(np.array(zeros), 1e-6)]
    zeros.sort(key=lambda z: (-z.imag, z.real))
    pi = tuple(z for z in zeros if z.real >= -tol)
    pi_tilde = tuple(z for z in pi if abs(z.real) <= tol)
    return ZeroSet(tuple(zeros), pi, pi_tilde, tol)


@dataclass
class AssumptionReport:
    """Pass/fail record of the standing assumptions for one agent.

    ``items`` maps a short key to ``(ok, hard, detail)``.  Soft items never
    make the report fail.
    """

    items: dict = field(default_factory=dict)

    def add(self, key, ok, hard=True, detail=""):
        self.items[key] = (bool(ok), hard, detail)

    @property
    def ok(self) -> bool:
        return all(ok for ok, hard, _ in self.items.values() if hard)

    def failures(self) -> list[str]:
        return [k for k, (ok, hard, _) in self.items.items() if hard and not ok]

    def lines(self) -> list[str]:
        out = []
        for key, (ok, hard, detail) in self.items.items():
            status = "pass" if ok else ("FAIL" if hard else "not satisfied")
            out.append(f"{key}: {status}" + (f" ({detail})" if detail else ""))
        return out


def check_assumptions(agent: AgentModel, exo: ExosystemModel, tol: float = matops.RANK_TOL) -> AssumptionReport:
    rep = AssumptionReport()
    bad = matops.uncontrollable_modes(agent.A, agent.B, tol, closed_rhp_only=True)
    rep.add("stabilizable", not bad, detail=f"PBH fails at {bad[0]:.6g}" if bad else "")
    bad = matops.uncontrollable_modes(agent.A.T, agent.C.T, tol, closed_rhp_only=True)
    rep.add("detectable", not bad, detail=f"PBH fails at {bad[0]:.6g}" if bad else "")
    if agent.q > agent.m:
        rep.add("rank_condition", False, detail=f"{agent.q} outputs exceed {agent.m} inputs")
    else:
        bad = [s for s in np.unique(np.round(exo.spectrum(), 12))
               if matops.numerical_rank(agent.rosenbrock(s), tol) < agent.n + agent.q]
        rep.add("rank_condition", not bad, detail=f"Rosenbrock rank drops at {bad[0]:.6g}" if bad else "")
    rep.add("exosystem_spectrum", exo.imaginary_spectrum(),
            detail="" if exo.imaginary_spectrum() else "S0 has eigenvalues off the imaginary axis")
    try:
        zs = transmission_zeros(agent)
        imag = zs.pi_tilde
        rep.add("no_imaginary_zeros", not imag, hard=False,
                detail="handled by semicircle avoidance" if imag else "")
    except (ModelError, MatrixError) as exc:
        rep.add("no_imaginary_zeros", False, hard=False, detail=str(exc))
    return rep
