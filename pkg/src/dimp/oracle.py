"""Independent checks: regulator equations, a baseline controller, lemma batteries.

Nothing here feeds back into the controller.  The regulator-equation
solution predicts the steady state a converged run must reach; the baseline
controller is the classical feedforward design used for comparison; the
batteries integrate randomized instances of the convergence lemmas the
controller relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matops
from .generator import generator_derivatives
from .graph import SwitchingDigraph, rooted_component_check, uniformly_contains_spanning_tree
from .ode import integrate, rk4_step, time_grid
from .plant import AgentModel
from .synthesis import CompensatorGains, assemble_closed_loop, augmented_stabilizable, rosenbrock_rank_condition

LEMMA_SEED = 20190207


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class RegulatorSolution:
    X: np.ndarray
    sylvester_residual: float
    output_residual: float


def solve_regulator_pair(agent: AgentModel, gains: CompensatorGains, lam0, S0) -> RegulatorSolution:
    """Steady-state map ``X`` with ``X S0 = M(lam0) X + [P; F Q]``.

    The output identity ``[C, D K] X + Q = 0`` is not imposed; its residual
    is reported so callers can confirm it holds as a consequence.
    """
    S0 = np.asarray(S0, dtype=float)
    M = assemble_closed_loop(agent, gains, lam0).M
    A, B, C, D, P, Q = agent.effective_matrices()
    rhs = np.vstack([P, gains.F @ Q])
    X = matops.solve_sylvester(M, S0, rhs)
    scale = 1.0 + np.linalg.norm(rhs) + np.linalg.norm(X) * (np.linalg.norm(M) + np.linalg.norm(S0))
    res1 = np.linalg.norm(X @ S0 - M @ X - rhs) / scale
    res2 = np.linalg.norm(np.hstack([C, D @ gains.K]) @ X + Q)
    return RegulatorSolution(X, float(res1), float(res2))


def steady_state_crosscheck(traj, solutions, tail_fraction: float = 0.1) -> float:
    """Tail maximum of ``|eta_i(t) - X_i w0(t)|`` over all agents.

    ``solutions`` holds one RegulatorSolution (or bare ``X``) per agent in
    trajectory order.
    """
    tail = traj.tail_mask(tail_fraction)
    x, xi = traj.series["x"][tail], traj.series["xi"][tail]
    w0 = traj.series["w0"][tail][:, 0, :]
    worst = 0.0
    for a, sol in enumerate(solutions):
        X = sol.X if isinstance(sol, RegulatorSolution) else np.asarray(sol)
        eta = np.concatenate([x[:, a], xi[:, a]], axis=1)
        eta = eta[:, ~np.isnan(eta[0])]
        if eta.shape[1] != X.shape[0]:
            raise OracleError(f"agent {traj.labels[a]}: X has {X.shape[0]} rows, state has {eta.shape[1]}")
        worst = max(worst, float(np.max(np.abs(eta - w0 @ X.T))))
    return worst


@dataclass(frozen=True)
class BaselineController:
    """Feedforward-plus-feedback law ``u = U w + Ks (x - X w)`` built on nominal matrices."""

    X: np.ndarray
    U: np.ndarray
    Ks: np.ndarray
    residuals: tuple


def solve_regulator_equations(A, B, C, D, P, Q, S0) -> tuple[np.ndarray, np.ndarray, tuple]:
    """Classical pair ``X S0 = A X + B U + P``, ``0 = C X + D U + Q`` by least squares."""
    n, m = B.shape
    q, r = Q.shape
    Ir = np.eye(r)
    top = np.hstack([np.kron(S0.T, np.eye(n)) - np.kron(Ir, A), -np.kron(Ir, B)])
    bot = np.hstack([np.kron(Ir, C), np.kron(Ir, D)])
    lhs = np.vstack([top, bot])
    rhs = np.concatenate([P.reshape(-1, order="F"), -Q.reshape(-1, order="F")])
    sol, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    X = sol[: n * r].reshape((n, r), order="F")
    U = sol[n * r:].reshape((m, r), order="F")
    scale = 1.0 + np.linalg.norm(P) + np.linalg.norm(Q)
    r1 = np.linalg.norm(X @ S0 - A @ X - B @ U - P) / scale
    r2 = np.linalg.norm(C @ X + D @ U + Q) / scale
    return X, U, (float(r1), float(r2))


def baseline_regulator_controller(agent: AgentModel, S0, poles, tol: float = 1e-8) -> BaselineController:
    S0 = np.asarray(S0, dtype=float)
    X, U, res = solve_regulator_equations(*agent.nominal(), S0)
    if max(res) > tol:
        raise OracleError(f"regulator equations have no solution (residuals {res[0]:.3g}, {res[1]:.3g})")
    Ks = matops.place_poles(agent.A, agent.B, poles)
    return BaselineController(X, U, Ks, res)


# ---------------------------------------------------------------- lemma batteries


@dataclass
class BatteryResult:
    name: str
    passed: int = 0
    total: int = 0
    worst_tail: float = 0.0
    threshold: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def line(self) -> str:
        head = f"{self.name}: {self.passed}/{self.total} passed"
        if self.threshold == 0:
            return head  # pass/fail battery, no tail norm
        return f"{head}, worst tail {self.worst_tail:.3e} (threshold {self.threshold:g})"


def _random_lambda(rng):
    """Conjugate pair ``a +- jb`` with ``a >= 0``; pure imaginary half the time."""
    b = rng.uniform(0.1, 3.0)
    a = 0.0 if rng.random() < 0.5 else rng.uniform(0.0, 1.0)
    return np.array([a + 1j * b, a - 1j * b])


def _zero_placed_agent(rng, zero):
    """Controllable-canonical SISO agent whose numerator vanishes at ``zero``.

    The numerator is ``(s - zero)(s - conj(zero))`` for complex ``zero`` and
    ``(s - zero)`` for real ``zero``; the denominator is random of degree 3.
    """
    n = 3
    num = matops.coefficients_from_roots([zero, np.conj(zero)] if abs(zero.imag) > 0 else [zero.real])
    num = np.concatenate([np.real(num), [1.0]])  # ascending powers
    A = matops.companion(rng.uniform(-2, 2, n))
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = np.zeros((1, n))
    C[0, : num.size] = num
    return AgentModel(A, B, C, np.zeros((1, 1)))


def lemma1_battery(cases: int = 200, violations: int = 20, seed: int = LEMMA_SEED) -> tuple:
    """Augmented stabilizability on random agents, plus constructed violations.

    Positive cases draw a stabilizable agent (up to 4 states, square or wide)
    and a root pair off its zeros; the augmented PBH test must pass and must
    agree with the Rosenbrock rank condition.  Violations put the root pair on
    a closed right-half-plane zero; the PBH test must fail.
    """
    rng = np.random.default_rng(seed)
    pos = BatteryResult("lemma1", threshold=0.0)
    while pos.total < cases:
        n = int(rng.integers(1, 5))
        q = int(rng.integers(1, 3))
        m = q + int(rng.integers(0, 2))
        a = AgentModel(rng.standard_normal((n, n)), rng.standard_normal((n, m)),
                       rng.standard_normal((q, n)), rng.standard_normal((q, m)) * (rng.random() < 0.5))
        lam = _random_lambda(rng)
        if matops.uncontrollable_modes(a.A, a.B, closed_rhp_only=True) or not rosenbrock_rank_condition(a, lam):
            continue
        pos.total += 1
        pbh = augmented_stabilizable(a, lam)
        pos.passed += bool(pbh)
        if not pbh:
            pos.notes.append(f"PBH failed at lambda={np.round(lam, 6)} (n={n}, m={m}, q={q})")
    neg = BatteryResult("lemma1_violations", threshold=0.0)
    for i in range(violations):
        lam = _random_lambda(rng)
        if i % 4 == 3:
            lam = np.array([complex(rng.uniform(0.1, 2.0))])
        a = _zero_placed_agent(rng, lam[0])
        neg.total += 1
        pbh = augmented_stabilizable(a, lam)
        agree = pbh == rosenbrock_rank_condition(a, lam)
        neg.passed += (not pbh) and agree
        if pbh or not agree:
            neg.notes.append(f"violation not detected at lambda={np.round(lam, 6)}")
    return pos, neg


def _stable_switching_family(rng, n, count):
    # symmetric parts bounded by -c I give the common Lyapunov function |x|^2
    mats = []
    for _ in range(count):
        R = rng.standard_normal((n, n))
        W = rng.standard_normal((n, n))
        c = rng.uniform(0.3, 1.0)
        mats.append(-(R @ R.T) / n - c * np.eye(n) + (W - W.T))
    return mats


def lemma2_instance(rng, horizon=60.0, h=0.01):
    """Tail norm of ``x' = (A1(t) + A2(t)) x + A3(t)`` for one random instance."""
    n = int(rng.integers(2, 5))
    family = _stable_switching_family(rng, n, int(rng.integers(2, 4)))
    dwell = rng.uniform(0.5, 3.0, size=len(family))
    period = dwell.sum()
    bounds = np.cumsum(dwell)
    R2 = rng.standard_normal((n, n))
    v3 = rng.standard_normal(n)
    x0 = rng.uniform(-1, 1, n)

    def A1(t):
        tau = t % period
        return family[min(int(np.searchsorted(bounds, tau, side="right")), len(family) - 1)]

    breaks = [p * period + b for p in range(int(horizon / period) + 1) for b in np.concatenate([[0], bounds[:-1]])]
    grid = time_grid(0.0, horizon, h, breaks)
    x = x0.copy()
    tail = 0.0
    for t0, t1 in zip(grid[:-1], grid[1:]):
        A = A1(0.5 * (t0 + t1))
        x = rk4_step(lambda t, y: (A + np.exp(-t) * R2) @ y + np.exp(-0.5 * t) * v3, t0, x, t1 - t0)
        if t1 >= 0.9 * horizon:
            tail = max(tail, float(np.max(np.abs(x))))
    return tail


def random_rooted_tree(rng, nodes, roots):
    """Parent map giving every non-root node a path from the root set."""
    order = [v for v in nodes if v not in roots]
    rng.shuffle(order)
    placed = list(roots)
    edges = []
    for v in order:
        parent = placed[int(rng.integers(len(placed)))]
        edges.append((parent, v))
        placed.append(v)
    return edges


def _split_snapshots(rng, labels, edges, count):
    idx = {lab: i for i, lab in enumerate(labels)}
    snaps = [np.zeros((len(labels), len(labels))) for _ in range(count)]
    for src, dst in edges:
        snaps[int(rng.integers(count))][idx[dst], idx[src]] = 1.0
    return snaps


def _generator_tail(graph: SwitchingDigraph, S, w, S_target, horizon, h, pairwise=False):
    T = horizon
    grid = time_grid(0.0, T, h, graph.switch_times(0.0, T))
    nn = S.shape[0]
    r = S.shape[1]
    y = np.concatenate([S.ravel(), w.ravel()])
    tail = 0.0
    for t0, t1 in zip(grid[:-1], grid[1:]):
        a = graph.adjacency_at(0.5 * (t0 + t1))

        def f(t, y, a=a):
            dS, dw = generator_derivatives(y[: nn * r * r].reshape(nn, r, r), y[nn * r * r:].reshape(nn, r), a)
            return np.concatenate([dS.ravel(), dw.ravel()])

        y = rk4_step(f, t0, y, t1 - t0)
        if t1 >= 0.9 * T:
            Sn = y[: nn * r * r].reshape(nn, r, r)
            wn = y[nn * r * r:].reshape(nn, r)
            werr = np.max(np.abs(wn[:, None, :] - wn[None, :, :])) if pairwise else np.max(np.abs(wn - wn[0]))
            tail = max(tail, float(np.max(np.abs(Sn - S_target))), float(werr))
    return tail


def _rotation(rng, r):
    blocks = []
    for _ in range(r // 2):
        om = rng.uniform(0.5, 2.0)
        blocks.append(np.array([[0, om], [-om, 0]]))
    S = np.zeros((r, r))
    for j, b in enumerate(blocks):
        S[2 * j:2 * j + 2, 2 * j:2 * j + 2] = b
    return S


def lemma3_instance(rng, horizon=100.0, h=0.02):
    N = int(rng.integers(3, 6))
    labels = list(range(N + 1))
    edges = random_rooted_tree(rng, labels, [0])
    count = int(rng.integers(2, 4))
    snaps = _split_snapshots(rng, labels, edges, count)
    dwell = rng.uniform(1.0, 3.0, size=count)
    g = SwitchingDigraph(snaps, [(j, dwell[j]) for j in range(count)], labels, exosystem=True)
    if not uniformly_contains_spanning_tree(g, root=0):
        raise OracleError("generated graph lacks a rooted spanning tree")
    S0 = _rotation(rng, 2)
    S = rng.uniform(-1, 1, (N + 1, 2, 2))
    S[0] = S0
    w = rng.uniform(-1, 1, (N + 1, 2))
    return _generator_tail(g, S, w, S0, horizon, h)


def generator_tail_on_graph(graph: SwitchingDigraph, S0, rng, horizon=100.0, h=0.02) -> float:
    """Generator convergence tail on a given exosystem graph with random initial values."""
    S0 = np.asarray(S0, dtype=float)
    nn, r = graph.n_nodes, S0.shape[0]
    S = rng.uniform(-1, 1, (nn, r, r))
    S[0] = S0
    w = rng.uniform(-1, 1, (nn, r))
    return _generator_tail(graph, S, w, S0, horizon, h)


def lemma5_instance(rng, horizon=100.0, h=0.02, break_closedness=False):
    """One randomized rooted-synchronization instance.

    Returns ``(precondition_ok, tail, reason)``.  When the root set is not a
    closed strongly connected component convergence is not claimed: the
    tail is ``nan`` and ``reason`` names the violated condition.
    """
    N = int(rng.integers(3, 6))
    labels = list(range(1, N + 1))
    nr = int(rng.integers(1, min(3, N - 1) + 1))
    roots = labels[:nr]
    cycle = [(roots[j], roots[(j + 1) % nr]) for j in range(nr)] if nr > 1 else []
    edges = cycle + random_rooted_tree(rng, labels, roots)
    if break_closedness:
        edges.append((labels[-1], roots[0]))
    count = int(rng.integers(2, 4))
    snaps = _split_snapshots(rng, labels, edges, count)
    dwell = rng.uniform(1.0, 3.0, size=count)
    g = SwitchingDigraph(snaps, [(j, dwell[j]) for j in range(count)], labels)
    check = rooted_component_check(g, roots)
    if not check:
        return False, float("nan"), check.reason
    S_star = _rotation(rng, 2)
    S = rng.uniform(-1, 1, (N, 2, 2))
    S[:nr] = S_star
    w = rng.uniform(-1, 1, (N, 2))
    return True, _generator_tail(g, S, w, S_star, horizon, h, pairwise=True), ""


def lemma_harnesses(instances: int = 50, seed: int = LEMMA_SEED) -> dict:
    """Run the three batteries plus the closedness negative control."""
    rng = np.random.default_rng(seed)
    out = {}
    res = BatteryResult("lemma2", threshold=1e-6)
    for _ in range(instances):
        tail = lemma2_instance(rng)
        res.total += 1
        res.passed += tail < res.threshold
        res.worst_tail = max(res.worst_tail, tail)
    out["lemma2"] = res
    res = BatteryResult("lemma3", threshold=1e-3)
    for _ in range(instances):
        tail = lemma3_instance(rng)
        res.total += 1
        res.passed += tail < res.threshold
        res.worst_tail = max(res.worst_tail, tail)
    out["lemma3"] = res
    res = BatteryResult("lemma5", threshold=1e-3)
    for _ in range(instances):
        ok, tail, why = lemma5_instance(rng)
        res.total += 1
        if not ok:
            res.notes.append(why)
            continue
        res.passed += tail < res.threshold
        res.worst_tail = max(res.worst_tail, tail)
    out["lemma5"] = res
    neg = BatteryResult("lemma5_negative_control", threshold=0.0)
    ok, _, why = lemma5_instance(rng, break_closedness=True)
    neg.total = 1
    neg.passed = int(not ok)
    neg.notes.append(why or "precondition unexpectedly satisfied")
    out["lemma5_negative_control"] = neg
    return out


def harness_summary(results: dict) -> str:
    """Flat ``key: value`` block of pass counts and worst tails."""
    lines = []
    for name, r in results.items():
        lines.append(f"{name}.passed: {r.passed}")
        lines.append(f"{name}.total: {r.total}")
        lines.append(f"{name}.worst_tail: {r.worst_tail!r}")
        lines.append(f"{name}.ok: {'true' if r.ok else 'false'}")
    return "\n".join(lines) + "\n"


__all__ = [
    "BaselineController", "BatteryResult", "OracleError", "RegulatorSolution",
    "baseline_regulator_controller", "generator_tail_on_graph", "harness_summary", "lemma1_battery", "lemma2_instance",
    "lemma3_instance", "lemma5_instance", "lemma_harnesses", "random_rooted_tree",
    "solve_regulator_equations", "solve_regulator_pair", "steady_state_crosscheck",
]
