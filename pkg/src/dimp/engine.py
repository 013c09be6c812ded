"""Fixed-step simulation of the whole network.

Each agent contributes the stacked closed-loop state ``eta = [x; xi]`` and
every node carries generator state ``(S, w)`` plus the reduced root estimate
``bh``.  Within a step the closed-loop matrices and the adjacency are frozen;
the step grid is aligned with graph switches so no step straddles one.

The closed-loop matrix of an agent is split as ``M = M_base(K) + G(lambda)``
(the internal-model block sits in the lower-right corner), so a change in the
root estimate costs a companion update per step and a full re-synthesis only
when the estimate has drifted by more than the cache tolerance.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .config import Scenario, ScenarioConfig, build
from .generator import check_rooted_initial, companion_from_reduced, companion_mode_reduction
from .internal_model import (
    batch_alpha,
    batch_coefficients,
    geometry_for,
    minimal_polynomial_roots,
)
from .ode import time_grid
from .plant import transmission_zeros
from .synthesis import SynthesisError, closed_loop_matrix, synthesize_gains

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e9


class EngineError(RuntimeError):
    pass


class DivergenceError(EngineError):
    pass


@dataclass
class Trajectory:
    """Sampled run output.

    ``series[name]`` has shape ``(samples, agents, components)``.  Agent ``a``
    in the arrays is graph node ``labels[a]``.
    """

    t: np.ndarray
    series: dict
    labels: tuple
    mode: str
    meta: dict = field(default_factory=dict)

    def tail_mask(self, fraction: float) -> np.ndarray:
        horizon = self.t[-1]
        return self.t >= (1.0 - fraction) * horizon - 1e-9


@dataclass
class Metrics:
    values: dict

    @property
    def passed(self) -> bool:
        return bool(self.values.get("passed", False))

    def text(self) -> str:
        return "".join(f"{k}: {_fmt(v)}\n" for k, v in self.values.items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


class _Group:
    """Agents sharing closed-loop dimensions, simulated as one batch."""

    def __init__(self, idx, d, q, r):
        g = len(idx)
        self.idx = np.asarray(idx)
        self.d = d
        self.M_base = np.zeros((g, d, d))
        self.M = np.zeros((g, d, d))
        self.Wi = np.zeros((g, d, r))
        self.W0 = np.zeros((g, d, r))
        self.Fq = np.zeros((g, d, q))
        self.Cz = np.zeros((g, q, d))
        self.Dzi = np.zeros((g, q, r))
        self.Dz0 = np.zeros((g, q, r))
        self.Qe = np.zeros((g, q, r))
        self.im_slice = None  # (start, k, q) of the internal-model block


class Simulation:
    """Compiled network ready for stepping."""

    def __init__(self, scenario: Scenario):
        self.sc = scenario
        d = scenario.config.data
        self.opts = d["options"]
        self.integ = d["integrator"]
        self.thr = d["thresholds"]
        self.reg = scenario.mode == "regulation"
        self.controller = d["controller"]
        self.graph = scenario.graph
        self.N = scenario.n_agents
        self.off = 1 if self.reg else 0
        self.Nn = self.N + self.off
        self.r = scenario.S_ref.shape[0]
        self.lam0 = minimal_polynomial_roots(scenario.S_ref)
        self.k = self.lam0.size
        self.kh = self.k // 2
        self.bh_ref = self.lam0.imag[: self.kh].copy()
        self.gain_tol = float(self.opts["gain_tol"])
        self.refreshes = 0
        self.companion_mode = False
        if self.opts["generator_mode"] == "companion":
            ok, _ = companion_mode_reduction(scenario.S_ref)
            if not ok:
                log.warning("companion generator mode does not apply to this exosystem; using full mode")
            self.companion_mode = ok
        qs = {a.model.q for a in scenario.agents}
        if not self.reg and len(qs) != 1:
            raise EngineError("synchronization requires a common output dimension")
        self.q = max(qs)
        self._geometry()
        self._groups()
        self._layout()
        self._initial_state()

    # ------------------------------------------------------------ setup

    def _geometry(self):
        sigma = matops.eig(self.sc.S_ref)
        coeff = float(self.opts["rho_coefficient"])
        self.zero_sets, self.geoms = [], []
        for a in self.sc.agents:
            zs = transmission_zeros(a.model)
            self.zero_sets.append(zs)
            self.geoms.append(geometry_for(sigma, zs, coeff, a.rho))
        width = max([len(g.pi_tilde) for g in self.geoms] + [0])
        self.pt_pad = np.full((self.Nn, width), np.inf, dtype=complex)
        self.rho = np.zeros(self.Nn)
        for i, g in enumerate(self.geoms):
            self.pt_pad[i + self.off, : len(g.pi_tilde)] = g.pi_tilde
            self.rho[i + self.off] = g.rho

    def _groups(self):
        keys = {}
        for i, a in enumerate(self.sc.agents):
            m = a.model
            keys.setdefault((m.n, m.m, m.q), []).append(i)
        self.groups = []
        self.agent_group = {}
        for (n, m, q), idx in keys.items():
            d = 2 * n + self.k * q if self.controller == "proposed" else n
            grp = _Group(idx, d, q, self.r)
            grp.n, grp.m, grp.q = n, m, q
            if self.controller == "proposed":
                grp.im_slice = (2 * n, self.k, q)
            for pos, i in enumerate(idx):
                self.agent_group[i] = (grp, pos)
            self.groups.append(grp)
        self.gains = [None] * self.N
        self.lam_at = np.zeros((self.N, self.k), dtype=complex)
        if self.controller == "baseline":
            from .oracle import baseline_regulator_controller

            for i, a in enumerate(self.sc.agents):
                bc = baseline_regulator_controller(a.model, self.sc.S_ref, a.state_poles)
                self._install_baseline(i, bc)

    def _install_baseline(self, i, bc):
        grp, pos = self.agent_group[i]
        A, B, C, D, P, Q = self.sc.agents[i].model.effective_matrices()
        ff = bc.U - bc.Ks @ bc.X
        grp.M_base[pos] = A + B @ bc.Ks
        grp.M[pos] = grp.M_base[pos]
        grp.Wi[pos] = B @ ff
        grp.W0[pos] = P
        grp.Cz[pos] = C + D @ bc.Ks
        grp.Dzi[pos] = D @ ff
        grp.Dz0[pos] = Q
        grp.Qe[pos] = Q

    def _install_gains(self, i, gains):
        grp, pos = self.agent_group[i]
        agent = self.sc.agents[i].model
        A, B, C, D, P, Q = agent.effective_matrices()
        n = agent.n
        K = gains.K
        Mb = closed_loop_matrix((A, B, C, D), gains.L, K, np.zeros_like(gains.G), gains.H, agent)
        grp.M_base[pos] = Mb
        F = gains.F
        grp.Fq[pos] = np.vstack([np.zeros((n, agent.q)), F])
        if self.reg:
            grp.Wi[pos] = grp.Fq[pos] @ Q
            grp.W0[pos, :n] = P
            grp.Dz0[pos] = Q
            grp.Qe[pos] = Q
        grp.Cz[pos] = np.hstack([C, D @ K])
        self.gains[i] = gains
        self.lam_at[i] = gains.lam_at

    def _layout(self):
        sizes = [("eta%d" % j, (len(g.idx), g.d)) for j, g in enumerate(self.groups)]
        sizes += [("w", (self.Nn, self.r)), ("S", (self.Nn, self.r, self.r)), ("bh", (self.Nn, self.kh))]
        if not self.reg:
            sizes.append(("Q", (self.N, self.q, self.r)))
        self.slices = {}
        pos = 0
        for name, shape in sizes:
            size = int(np.prod(shape))
            self.slices[name] = (slice(pos, pos + size), shape)
            pos += size
        self.size = pos

    def view(self, y, name):
        sl, shape = self.slices[name]
        return y[sl].reshape(shape)

    def _initial_state(self):
        y = np.zeros(self.size)
        w = self.view(y, "w")
        S = self.view(y, "S")
        bh = self.view(y, "bh")
        if self.reg:
            w[0] = self.sc.exo.w0
            S[0] = self.sc.S_ref
            bh[0] = self.bh_ref
        roots_idx = [self.graph.index(lab) for lab in self.sc.roots] if not self.reg else []
        for i, a in enumerate(self.sc.agents):
            node = i + self.off
            grp, pos = self.agent_group[i]
            eta = self.view(y, "eta%d" % self.groups.index(grp))
            ini = a.init
            n = a.model.n
            eta[pos, :n] = ini["x"]
            if self.controller == "proposed":
                eta[pos, n:] = ini["xi"]
            w[node] = ini["w"]
            if ini["S"] is not None:
                S[node] = ini["S"]
            elif node in roots_idx:
                S[node] = self.sc.S_ref
            bh[node] = ini["beta_hat"]
            if not self.reg:
                if ini["Q"] is None:
                    raise EngineError(f"agent {self.graph.labels[node]}: synchronization needs an initial Q")
                self.view(y, "Q")[i] = ini["Q"]
        if roots_idx:
            ref = check_rooted_initial(S, roots_idx)
            if np.max(np.abs(ref - self.sc.S_ref)) > 0:
                raise EngineError("root agents must start from the reference S")
        if self.companion_mode:
            S[self.off:] = companion_from_reduced(bh[self.off:], self.k)
        self.y0 = y
        if self.controller == "proposed":
            lam = self.lambdas(bh)
            for i, a in enumerate(self.sc.agents):
                try:
                    g = synthesize_gains(a.model, lam[i + self.off], a.observer_poles, a.state_poles)
                except SynthesisError as exc:
                    raise EngineError(f"agent {self.graph.labels[i + self.off]}: {exc}") from exc
                self._install_gains(i, g)

    # ------------------------------------------------------------ dynamics

    def alphas(self, bh) -> np.ndarray:
        a = batch_alpha(bh, self.rho, self.pt_pad)
        if self.reg:
            a[0] = 0.0
        return a

    def lambdas(self, bh) -> np.ndarray:
        """Full root estimates for every node from the reduced imaginary parts."""
        a = self.alphas(bh)
        parts = [a + 1j * bh, a - 1j * bh]
        if self.k % 2:
            odd = batch_alpha(np.zeros((self.Nn, 1)), self.rho, self.pt_pad)
            if self.reg:
                odd[0] = 0.0
            parts.append(odd.astype(complex))
        return np.concatenate(parts, axis=1)

    def _refresh(self, lam_agents):
        drift = np.max(np.abs(lam_agents - self.lam_at), axis=1)
        for i in np.nonzero(drift > self.gain_tol)[0]:
            a = self.sc.agents[i]
            try:
                g = synthesize_gains(a.model, lam_agents[i], a.observer_poles, a.state_poles,
                                     L=self.gains[i].L, precheck=False, prefer=self.gains[i].method)
            except SynthesisError as exc:
                raise EngineError(f"agent {self.graph.labels[i + self.off]}: gain re-synthesis failed: {exc}") from exc
            self._install_gains(i, g)
            self.refreshes += 1

    def freeze(self, y):
        """Update the per-step matrices from the state at the start of a step."""
        bh = self.view(y, "bh")
        if self.companion_mode:
            self.view(y, "S")[self.off:] = companion_from_reduced(bh[self.off:], self.k)
        if self.controller != "proposed":
            return
        lam = self.lambdas(bh)[self.off:]
        self._refresh(lam)
        coeffs = batch_coefficients(lam)
        k = self.k
        for grp in self.groups:
            start, _, q = grp.im_slice
            grp.M[:] = grp.M_base
            c = coeffs[grp.idx]
            for j in range(q):
                s = start + j * k
                grp.M[:, s:s + k - 1, s + 1:s + k] += np.eye(k - 1)
                grp.M[:, s + k - 1, s:s + k] -= c

    def rhs(self, y, adj, deg):
        out = np.empty_like(y)
        w = self.view(y, "w")
        S = self.view(y, "S")
        for j, grp in enumerate(self.groups):
            sl, shape = self.slices["eta%d" % j]
            eta = y[sl].reshape(shape)
            wa = w[grp.idx + self.off]
            d = np.einsum("gij,gj->gi", grp.M, eta)
            if self.reg:
                d += np.einsum("gij,gj->gi", grp.Wi, wa) + grp.W0 @ w[0]
            else:
                Q = self.view(y, "Q")[grp.idx]
                d += np.einsum("giq,gq->gi", grp.Fq, np.einsum("gqr,gr->gq", Q, wa))
            out[sl] = d.ravel()
        sl, _ = self.slices["w"]
        out[sl] = (np.einsum("nij,nj->ni", S, w) + adj @ w - deg[:, None] * w).ravel()
        sl, shape = self.slices["S"]
        if self.companion_mode:
            out[sl] = 0.0
        else:
            flat = S.reshape(self.Nn, -1)
            out[sl] = (adj @ flat - deg[:, None] * flat).ravel()
        sl, _ = self.slices["bh"]
        bh = self.view(y, "bh")
        out[sl] = (adj @ bh - deg[:, None] * bh).ravel()
        if not self.reg:
            sl, _ = self.slices["Q"]
            Qf = self.view(y, "Q").reshape(self.N, -1)
            ag = adj
            out[sl] = (ag @ Qf - deg[:, None] * Qf).ravel()
        return out

    # ------------------------------------------------------------ observation

    def observe(self, y) -> dict:
        """Instantaneous signals of every agent (padded with NaN across groups)."""
        N, q, r = self.N, self.q, self.r
        w = self.view(y, "w")
        S = self.view(y, "S")
        bh = self.view(y, "bh")
        z = np.full((N, q), np.nan)
        e = np.full((N, q), np.nan)
        nmax = max(g.n for g in self.groups)
        dmax = max(g.d for g in self.groups)
        x = np.full((N, nmax), np.nan)
        xi = np.full((N, max(dmax - nmax, 0)), np.nan)
        margin = np.zeros((N, 1))
        for j, grp in enumerate(self.groups):
            eta = self.view(y, "eta%d" % j)
            wa = w[grp.idx + self.off]
            base = np.einsum("gqd,gd->gq", grp.Cz, eta) + np.einsum("gqr,gr->gq", grp.Dzi, wa)
            if self.reg:
                z[grp.idx, : grp.q] = base + grp.Dz0 @ w[0]
                e[grp.idx, : grp.q] = base + np.einsum("gqr,gr->gq", grp.Qe, wa)
            else:
                Q = self.view(y, "Q")[grp.idx]
                z[grp.idx, : grp.q] = base
                e[grp.idx, : grp.q] = base + np.einsum("gqr,gr->gq", Q, wa)
            x[grp.idx, : grp.n] = eta[:, : grp.n]
            xi[grp.idx, : grp.d - grp.n] = eta[:, grp.n:]
            margin[grp.idx, 0] = np.max(np.linalg.eigvals(grp.M).real, axis=1)
        obs = {"z" if self.reg else "y": z, "e": e, "x": x, "xi": xi, "margin": margin}
        if self.reg:
            obs["w_err"] = w[1:] - w[0]
            obs["w0"] = np.broadcast_to(w[0], (N, r)).copy()
            obs["S_err"] = np.max(np.abs(S[1:] - S[0]), axis=(1, 2))[:, None]
        else:
            obs["w"] = w.copy()
            obs["Qw"] = np.einsum("nqr,nr->nq", self.view(y, "Q"), w)
            obs["S_err"] = np.max(np.abs(S - self.sc.S_ref), axis=(1, 2))[:, None]
        obs["beta_hat"] = bh[self.off:].copy()
        lam = self.lambdas(bh)[self.off:]
        obs["alpha"] = lam.real.copy()
        if self.pt_pad.shape[1]:
            dz = np.abs(lam[:, :, None] - self.pt_pad[self.off:, None, :])
            obs["zero_clearance"] = np.min(dz, axis=(1, 2))[:, None]
        if self.controller == "proposed":
            K = np.full((N, max(g.m * (g.d - g.n) for g in self.groups)), np.nan)
            for i, gn in enumerate(self.gains):
                K[i, : gn.K.size] = gn.K.ravel()
            obs["K"] = K
        return obs


def simulate(scenario: Scenario, horizon: float | None = None, h: float | None = None,
             decimation: int | None = None) -> Trajectory:
    """Integrate the network and return the sampled trajectory."""
    sim = Simulation(scenario)
    integ = scenario.config.data["integrator"]
    T = float(integ["horizon"] if horizon is None else horizon)
    h = float(integ["h"] if h is None else h)
    dec = int(integ["decimation"] if decimation is None else decimation)
    if h <= 0 or T <= 0 or dec < 1:
        raise EngineError("h, horizon and decimation must be positive")
    g = sim.graph
    grid = time_grid(0.0, T, h, g.switch_times(0.0, T))
    sample_dt = h * dec
    ratio = grid / sample_dt
    is_sample = np.abs(ratio - np.round(ratio)) < 1e-6
    is_sample[-1] = True
    # one adjacency per snapshot, chosen at each step's midpoint
    mids = 0.5 * (grid[:-1] + grid[1:])
    slots = np.array([g.schedule[g.slot_at(m)][0] for m in mids])
    adjs = [np.asarray(a, dtype=float) for a in g.snapshots]
    degs = [a.sum(axis=1) for a in adjs]

    y = sim.y0.copy()
    samples_t, samples = [], {}

    def record(t, y):
        sim.freeze(y)
        samples_t.append(t)
        for name, val in sim.observe(y).items():
            samples.setdefault(name, []).append(val)

    started = time.perf_counter()
    for s in range(grid.size - 1):
        t0, t1 = grid[s], grid[s + 1]
        if is_sample[s]:
            record(t0, y)
        else:
            sim.freeze(y)
        a, dg = adjs[slots[s]], degs[slots[s]]
        hs = t1 - t0
        k1 = sim.rhs(y, a, dg)
        k2 = sim.rhs(y + (hs / 2) * k1, a, dg)
        k3 = sim.rhs(y + (hs / 2) * k2, a, dg)
        k4 = sim.rhs(y + hs * k3, a, dg)
        y = y + (hs / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        big = np.max(np.abs(y))
        if not np.isfinite(big) or big > DIVERGENCE_LIMIT:
            raise DivergenceError(_divergence_report(sim, y, t1))
    record(grid[-1], y)
    elapsed = time.perf_counter() - started

    labels = tuple(g.labels[sim.off:])
    traj = Trajectory(np.array(samples_t), {k: np.array(v) for k, v in samples.items()}, labels,
                      scenario.mode)
    traj.meta.update(
        k=sim.k, bh_ref=sim.bh_ref, rho=sim.rho[sim.off:].copy(),
        pi_tilde=[g_.pi_tilde for g_ in sim.geoms], gain_refreshes=sim.refreshes,
        elapsed=elapsed, h=h, horizon=T, seed=scenario.seed, final_state=y,
        controller=sim.controller, roots=scenario.roots, gains=list(sim.gains),
        lam0=sim.lam0,
    )
    return traj


def _divergence_report(sim: Simulation, y, t) -> str:
    bad = ~np.isfinite(y) | (np.abs(y) > DIVERGENCE_LIMIT)
    first = int(np.argmax(bad))
    for name, (sl, shape) in sim.slices.items():
        if sl.start <= first < sl.stop:
            idx = np.unravel_index(first - sl.start, shape)
            if name.startswith("eta"):
                grp = sim.groups[int(name[3:])]
                agent = grp.idx[idx[0]]
                comp = f"{'x' if idx[1] < grp.n else 'xi'}[{idx[1] if idx[1] < grp.n else idx[1] - grp.n}]"
                return f"state diverged at t={t:.6g}: agent {sim.graph.labels[agent + sim.off]} component {comp}"
            node = sim.graph.labels[idx[0]] if name != "Q" else sim.graph.labels[idx[0] + sim.off]
            return f"state diverged at t={t:.6g}: node {node} component {name}{list(idx[1:])}"
    return f"state diverged at t={t:.6g}"


def compute_metrics(traj: Trajectory, thresholds: dict) -> Metrics:
    frac = float(thresholds["tail_fraction"])
    tail = traj.tail_mask(frac)
    v = {"tail_fraction": frac, "horizon": float(traj.t[-1])}
    checks = []
    if traj.mode == "regulation":
        reg = float(np.nanmax(np.abs(traj.series["z"][tail])))
        gen = float(np.nanmax(np.abs(traj.series["w_err"][tail])))
        v["tail_max_regulation_error"] = reg
        v["tail_max_generator_error"] = gen
        checks += [reg < thresholds["regulation"], gen < thresholds["generator"]]
    else:
        y = traj.series["y"][tail]
        gap = float(np.nanmax(np.abs(y[:, :, None, :] - y[:, None, :, :])))
        w = traj.series["w"][tail]
        wgap = float(np.max(np.abs(w[:, :, None, :] - w[:, None, :, :])))
        v["tail_max_pairwise_output_gap"] = gap
        v["tail_max_generator_error"] = wgap
        checks += [gap < thresholds["sync_gap"], wgap < thresholds["generator"]]
    if traj.meta.get("controller") == "proposed":
        bh = traj.series["beta_hat"]
        dev = np.max(np.abs(bh - traj.meta["bh_ref"]), axis=(1, 2)) if bh.shape[2] else np.zeros(traj.t.size)
        above = np.nonzero(dev >= thresholds["lambda_tol"])[0]
        if above.size == 0:
            v["lambda_convergence_time"] = 0.0
        elif above[-1] == traj.t.size - 1:
            v["lambda_convergence_time"] = float("inf")
        else:
            v["lambda_convergence_time"] = float(traj.t[above[-1] + 1])
        v["max_closed_loop_real_part"] = float(np.max(traj.series["margin"]))
        v["gain_refreshes"] = int(traj.meta["gain_refreshes"])
    v["passed"] = bool(all(checks))
    return Metrics(v)


def run(scenario, seed=None, horizon=None, h=None, decimation=None) -> tuple[Trajectory, Metrics]:
    """Build (if needed), integrate and score a scenario."""
    if isinstance(scenario, ScenarioConfig):
        scenario = build(scenario, seed)
    traj = simulate(scenario, horizon, h, decimation)
    return traj, compute_metrics(traj, scenario.config.data["thresholds"])


DEFAULT_SERIES = ("z", "y", "e", "w_err", "beta_hat", "alpha", "margin", "K")


def write_csv(traj: Trajectory, path, series=None) -> None:
    """Long-format CSV with header ``t,agent,series,component,value``."""
    names = [s for s in (series or DEFAULT_SERIES) if s in traj.series]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "agent", "series", "component", "value"])
        for s, t in enumerate(traj.t):
            ts = repr(float(t))
            for a, lab in enumerate(traj.labels):
                for name in names:
                    row = traj.series[name][s, a]
                    for c, val in enumerate(row):
                        if np.isnan(val):
                            continue
                        wr.writerow([ts, lab, name, c + 1, repr(float(val))])


def write_metrics(metrics: Metrics, path) -> None:
    with open(path, "w") as fh:
        fh.write(metrics.text())


def alpha_activation_trace(traj: Trajectory, geometries=None) -> dict:
    """Intervals with positive real part, cross-checked against ``gamma < rho``.

    ``gamma`` is recomputed from the recorded reduced imaginary parts.  The
    result maps each agent label to ``{"intervals": [...], "mismatches": n}``.
    """
    bh = traj.series["beta_hat"]
    al = traj.series["alpha"]
    kh = bh.shape[2]
    out = {}
    for a, lab in enumerate(traj.labels):
        if geometries is not None:
            rho, pt = geometries[a].rho, geometries[a].pi_tilde
        else:
            rho, pt = traj.meta["rho"][a], traj.meta["pi_tilde"][a]
        pt = np.asarray(pt, dtype=complex)
        if pt.size:
            g = np.min(np.abs(1j * bh[:, a, :, None] - pt[None, None, :]), axis=2)
        else:
            g = np.zeros((traj.t.size, kh))
        expect = g < rho
        active = al[:, a, :kh] > 0
        mism = int(np.sum(expect != active))
        on = np.any(active, axis=1)
        intervals = []
        start = None
        for s, flag in enumerate(on):
            if flag and start is None:
                start = traj.t[s]
            if not flag and start is not None:
                intervals.append((float(start), float(traj.t[s - 1])))
                start = None
        if start is not None:
            intervals.append((float(start), float(traj.t[-1])))
        out[lab] = {"intervals": intervals, "mismatches": mism}
    return out
