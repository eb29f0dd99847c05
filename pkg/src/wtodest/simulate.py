"""Closed-loop Monte Carlo: plant + scheduler + estimator stepping, ensemble
performance metrics, mean-square decay reports, and evaluation of the
delay-window Lyapunov functional along recorded trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .augment import (EstimatorGains, augmented_activation, augmented_grid,
                      build_closed_loop)
from .model import (MjnnModel, TransitionCompletion, activation_apply,
                    sample_delay, sample_next_mode)
from .protocol import (NodePartition, SchedulerState, WtodWeights,
                       select_node, update_transmitted)

OVERFLOW_LIMIT = 1e12


class NumericOverflowError(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"state magnitude exceeded {OVERFLOW_LIMIT:g} at step {step}")


class CertificateMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DisturbanceSignal:
    """Disturbance pair (omega, v); the built-in profile is a decaying
    sinusoid broadcast over every disturbance coordinate."""

    kind: str = "zero"  # "zero" | "decaying" | "series"
    amp_w: float = 1.0
    amp_v: float = 2.0
    rate: float = 0.05
    literal_exponent: bool = False  # exp(-(rate**k)) instead of exp(-rate*k)
    values: np.ndarray | None = None  # (horizon, 2r) when kind == "series"

    @classmethod
    def zero(cls) -> "DisturbanceSignal":
        return cls(kind="zero")

    @classmethod
    def decaying(cls, amp_w: float = 1.0, amp_v: float = 2.0,
                 rate: float = 0.05,
                 literal_exponent: bool = False) -> "DisturbanceSignal":
        return cls(kind="decaying", amp_w=amp_w, amp_v=amp_v, rate=rate,
                   literal_exponent=literal_exponent)

    @classmethod
    def series(cls, values: np.ndarray) -> "DisturbanceSignal":
        return cls(kind="series", values=np.asarray(values, dtype=float))

    def omega_bar(self, k: int, r: int) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(2 * r)
        if self.kind == "series":
            return self.values[k]
        env = (np.exp(-(self.rate ** k)) if self.literal_exponent
               else np.exp(-self.rate * k))
        w = self.amp_w * env * np.sin(k) * np.ones(r)
        v = self.amp_v * env * np.cos(2 * k) * np.ones(r)
        return np.concatenate([w, v])


@dataclass
class Trajectory:
    """Time-indexed record; state arrays carry ``offset`` pre-history rows."""

    horizon: int
    offset: int  # tau_max rows of initial history before k = 0
    mode: np.ndarray       # (horizon,) int
    delay: np.ndarray      # (horizon,) int
    node: np.ndarray       # (horizon,) int
    x_bar: np.ndarray      # (offset + horizon + 1, na)
    x_hat: np.ndarray      # (offset + horizon + 1, na)
    e: np.ndarray          # (offset + horizon + 1, na)
    z_tilde: np.ndarray    # (horizon, q)
    W_sq: np.ndarray       # (horizon,) stacked-disturbance squared norm
    omega_sq: np.ndarray   # (horizon,) single-count squared norm

    def state(self, k: int) -> np.ndarray:
        """Stacked [plant-state; error] vector at time k (k >= -offset)."""
        return np.concatenate([self.x_bar[self.offset + k],
                               self.e[self.offset + k]])

    @property
    def sup_ztilde_sq(self) -> float:
        return float((self.z_tilde ** 2).sum(axis=1).max())

    @property
    def sum_W_sq(self) -> float:
        return float(self.W_sq.sum())

    def node_counts(self, node_count: int) -> np.ndarray:
        return np.bincount(self.node, minlength=node_count)


@dataclass
class EnsembleMetrics:
    runs: int
    ms_state_norm: np.ndarray       # per-step ensemble mean of ||state||^2
    peak_mean_ztilde_sq: float
    energy_paper: float             # mean over runs of the double-counted sum
    energy_single: float
    empirical_ratio: float | None   # None when the denominator vanishes
    empirical_ratio_single: float | None
    ratio_std_error: float | None
    node_counts: np.ndarray


def simulate(model: MjnnModel, partition: NodePartition, weights: WtodWeights,
             gains: EstimatorGains, completion: TransitionCompletion,
             disturbance: DisturbanceSignal, horizon: int, seed,
             initial_history: np.ndarray | None = None) -> Trajectory:
    """Step plant, scheduler and estimator; bit-reproducible for a seed.

    ``initial_history`` is a (tau_max + 1, n) block of plant states for
    k = -tau_max .. 0 (zeros when omitted); estimator and scheduler memory
    start at zero.
    """
    rng = np.random.default_rng(seed)
    n, mo, q = model.n, model.m, model.q
    na = n + mo
    tau_max = model.delay.tau_max
    off = tau_max
    T = horizon
    grid = augmented_grid(model, partition)

    x = np.zeros((off + T + 1, n))
    if initial_history is not None:
        hist = np.asarray(initial_history, dtype=float)
        if hist.shape != (tau_max + 1, n):
            raise ValueError(f"initial history must be {(tau_max + 1, n)}")
        x[: off + 1] = hist
    x_hat = np.zeros((off + T + 1, na))
    y_bar_hist = np.zeros((off + T + 1, mo))  # y_bar(k-1) at row off+k

    mode = np.zeros(T, dtype=int)
    delay = np.zeros(T, dtype=int)
    node = np.zeros(T, dtype=int)
    z_tilde = np.zeros((T, q))
    W_sq = np.zeros(T)
    omega_sq = np.zeros(T)

    sched = SchedulerState.initial(mo)
    i = int(rng.integers(model.N))
    for k in range(T):
        mode[k] = i
        tau = sample_delay(model.delay, rng.random())
        delay[k] = tau
        mm = model.modes[i]
        ob = disturbance.omega_bar(k, model.r)
        w, v = ob[: model.r], ob[model.r:]

        xk = x[off + k]
        y = mm.E @ xk + mm.D2 @ v
        o = select_node(sched, y, weights, partition)
        node[k] = o
        x_bar_k = np.concatenate([xk, sched.y_bar])
        e_k = x_bar_k - x_hat[off + k]
        z_tilde[k] = np.hstack([mm.M, np.zeros((q, mo))]) @ e_k
        W_sq[k] = 2.0 * float(ob @ ob)
        omega_sq[k] = float(ob @ ob)

        sched = update_transmitted(sched, y, o, partition)  # y_bar(k)

        fx = activation_apply(model, xk)
        fx_tau = activation_apply(model, x[off + k - tau])
        x[off + k + 1] = (mm.A @ xk + mm.B @ fx + mm.C @ fx_tau + mm.D1 @ w)
        y_bar_hist[off + k + 1] = sched.y_bar

        p = grid[(i, o)]
        K = gains.K[(i, o)]
        xh = x_hat[off + k]
        fh = augmented_activation(model, xh)
        fh_tau = augmented_activation(model, x_hat[off + k - tau])
        innov = sched.y_bar - p.E_bar @ xh
        x_hat[off + k + 1] = (p.A_bar @ xh + p.B_bar @ fh
                              + p.C_bar @ fh_tau + K @ innov)

        if (np.abs(x[off + k + 1]).max() > OVERFLOW_LIMIT
                or np.abs(x_hat[off + k + 1]).max() > OVERFLOW_LIMIT):
            raise NumericOverflowError(k)

        i = sample_next_mode(completion, i, rng.random())

    x_bar = np.hstack([x, y_bar_hist])
    return Trajectory(horizon=T, offset=off, mode=mode, delay=delay,
                      node=node, x_bar=x_bar, x_hat=x_hat, e=x_bar - x_hat,
                      z_tilde=z_tilde, W_sq=W_sq, omega_sq=omega_sq)


def replay_stacked(model: MjnnModel, partition: NodePartition,
                   gains: EstimatorGains, traj: Trajectory,
                   disturbance: DisturbanceSignal) -> np.ndarray:
    """Re-run a recorded trajectory through the stacked [plant; error] form
    with the same mode/node/delay decisions; returns the stacked states for
    k = 0 .. horizon so tests can assert the augmentation is exact."""
    grid = augmented_grid(model, partition)
    cl = build_closed_loop(grid, gains, model)
    na = model.n + model.m
    off, T = traj.offset, traj.horizon

    eta = np.zeros((off + T + 1, 2 * na))
    for k in range(-off, 1):
        eta[off + k] = traj.state(k)

    def f_tilde(row: np.ndarray) -> np.ndarray:
        x_bar, err = row[:na], row[na:]
        fb = augmented_activation(model, x_bar)
        fh = augmented_activation(model, x_bar - err)
        return np.concatenate([fb, fb - fh])

    for k in range(T):
        key = (int(traj.mode[k]), int(traj.node[k]))
        tau = int(traj.delay[k])
        ob = disturbance.omega_bar(k, model.r)
        W = np.concatenate([ob, ob])
        eta[off + k + 1] = (cl.A[key] @ eta[off + k]
                            + cl.B[key] @ f_tilde(eta[off + k])
                            + cl.C[key] @ f_tilde(eta[off + k - tau])
                            + cl.D[key] @ W)
    return eta[off:]


def empirical_l2linf(model: MjnnModel, partition: NodePartition,
                     weights: WtodWeights, gains: EstimatorGains,
                     completion: TransitionCompletion,
                     disturbance: DisturbanceSignal, runs: int, horizon: int,
                     seed: int) -> EnsembleMetrics:
    """Monte-Carlo estimate of peak mean error energy over disturbance energy.

    The headline ratio uses the stacked disturbance norm, which double-counts
    the physical pair; the single-count ratio is reported alongside.
    """
    if runs < 1:
        raise ValueError("need runs >= 1")
    zt_sq = np.zeros((runs, horizon))
    ms_state = np.zeros(horizon)
    energy_paper = np.zeros(runs)
    energy_single = np.zeros(runs)
    counts = np.zeros(partition.node_count, dtype=int)
    for run in range(runs):
        traj = simulate(model, partition, weights, gains, completion,
                        disturbance, horizon, seed=[seed, run])
        zt_sq[run] = (traj.z_tilde ** 2).sum(axis=1)
        states = np.hstack([traj.x_bar, traj.e])[traj.offset:traj.offset + horizon]
        ms_state += (states ** 2).sum(axis=1)
        energy_paper[run] = traj.sum_W_sq
        energy_single[run] = float(traj.omega_sq.sum())
        counts += traj.node_counts(partition.node_count)

    mean_zt = zt_sq.mean(axis=0)
    k_star = int(mean_zt.argmax())
    peak = float(mean_zt[k_star])
    se = float(zt_sq[:, k_star].std(ddof=1) / np.sqrt(runs)) if runs > 1 else None
    denom = float(energy_paper.mean())
    denom_single = float(energy_single.mean())
    return EnsembleMetrics(
        runs=runs,
        ms_state_norm=ms_state / runs,
        peak_mean_ztilde_sq=peak,
        energy_paper=denom,
        energy_single=denom_single,
        empirical_ratio=(peak / denom if denom > 0 else None),
        empirical_ratio_single=(peak / denom_single if denom_single > 0 else None),
        ratio_std_error=(se / denom if (se is not None and denom > 0) else None),
        node_counts=counts,
    )


@dataclass
class DecayReport:
    decay_step: int | None  # first step below the threshold, None = NoDecay
    initial: float
    curve: np.ndarray

    @property
    def decayed(self) -> bool:
        return self.decay_step is not None


def mean_square_decay(model: MjnnModel, partition: NodePartition,
                      weights: WtodWeights, gains: EstimatorGains,
                      completion: TransitionCompletion, runs: int,
                      horizon: int, seed: int,
                      initial_scale: float = 1.0,
                      threshold: float = 1e-6) -> DecayReport:
    """Unforced ensemble mean of the stacked squared state norm; reports the
    first step at which it falls below threshold x its initial value."""
    curve = np.zeros(horizon + 1)
    tau_max = model.delay.tau_max
    for run in range(runs):
        rng = np.random.default_rng([seed, run, 7])
        hist = initial_scale * rng.standard_normal((tau_max + 1, model.n))
        try:
            traj = simulate(model, partition, weights, gains, completion,
                            DisturbanceSignal.zero(), horizon,
                            seed=[seed, run], initial_history=hist)
        except NumericOverflowError:
            return DecayReport(None, float("inf"), curve)
        states = np.hstack([traj.x_bar, traj.e])[traj.offset:]
        curve += (states ** 2).sum(axis=1)
    curve /= runs
    initial = float(curve[0])
    if initial == 0.0:
        return DecayReport(0, 0.0, curve)
    below = np.nonzero(curve < threshold * initial)[0]
    step = int(below[0]) if below.size else None
    return DecayReport(step, initial, curve)


def lyapunov_delta_check(traj: Trajectory, assignment: dict,
                         model: MjnnModel) -> np.ndarray:
    """V(k+1) - V(k) for the delay-window functional, k = 0 .. horizon - 2.

    ``assignment`` must contain P1_{i}_{m} blocks and Z from a feasible
    analysis solve.
    """
    na = model.n + model.m
    nh = 2 * na
    Z = np.asarray(assignment["Z"])
    if Z.shape != (nh, nh):
        raise CertificateMismatchError(f"Z is {Z.shape}, expected {(nh, nh)}")

    def P_full(i: int, m: int) -> np.ndarray:
        P1 = np.asarray(assignment[f"P1_{i}_{m}"])
        if P1.shape != (na, na):
            raise CertificateMismatchError(
                f"P1_{i}_{m} is {P1.shape}, expected {(na, na)}")
        return np.kron(np.eye(2), P1)

    tau_lo, tau_hi = model.delay.tau_min, model.delay.tau_max

    def V(k: int) -> float:
        eta_k = traj.state(k)
        P = P_full(int(traj.mode[k]), int(traj.node[k]))
        v = float(eta_k @ P @ eta_k)
        tau_k = int(traj.delay[k])
        for d in range(k - tau_k, k):
            eta_d = traj.state(d)
            v += float(eta_d @ Z @ eta_d)
        for l in range(k - tau_hi + 1, k - tau_lo + 1):
            for d in range(l, k):
                eta_d = traj.state(d)
                v += float(eta_d @ Z @ eta_d)
        return v

    values = np.array([V(k) for k in range(traj.horizon)])
    return np.diff(values)
