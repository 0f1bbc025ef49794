"""Interaction kernels and the first-order particle system

    dx_i/dt = (1/N) sum_{j != i} a(|x_i - x_j|) (x_j - x_i).

Simulation is classical fixed-step RK4; snapshots are taken at m+1 uniform
instants on [0, T].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .rng import stream


class KernelEvaluationError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Kernel:
    """A radial interaction function a: R+ -> R with its metadata.

    ``fn`` must accept numpy arrays. ``sup_bound`` is an upper bound on
    ``|a|`` over the whole half line (for capped singular kernels, over the
    capped evaluator).
    """

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    singular_at_zero: bool = False
    params: dict = field(default_factory=dict)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.asarray(self.fn(r), dtype=float)
        out = np.broadcast_to(out, r.shape).copy()
        bad = ~np.isfinite(out) & (r > 0)
        if bad.any():
            raise KernelEvaluationError(
                f"kernel {self.name!r} is not finite at r={r[bad].flat[0]!r}")
        return out

    def lipschitz_bound_on(self, lo: float, hi: float, n: int = 10_000) -> float:
        """Largest difference quotient on a uniform grid of ``n`` points."""
        s = np.linspace(lo, hi, n)
        vals = self(s)
        return float(np.max(np.abs(np.diff(vals)) / np.diff(s)))


def _smooth_cutoff(r, r_cut, width):
    x = np.clip((r - r_cut) / width, 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


def trunc_lj(G=1.0, r0=1.0, M_cap=100.0, r_cut=4.0, delta=0.5) -> Kernel:
    """Clipped Lennard-Jones-like kernel, smoothly switched off past ``r_cut``."""

    def fn(r):
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            q = (r0 / r) ** 4
            raw = G * (q * q - q)
        raw = np.where(r > 0, raw, np.inf)
        raw = np.where(np.isnan(raw), np.inf, raw)
        return np.clip(raw, -M_cap, M_cap) * _smooth_cutoff(r, r_cut, delta)

    params = dict(G=G, r0=r0, M_cap=M_cap, r_cut=r_cut, delta=delta)
    return Kernel("trunc_lj", fn, float(M_cap), False, params)


def osc_sing(omega=20.0, M_cap=100.0) -> Kernel:
    """r^(-1/2) (1 + sin(omega r)), frozen below r = M_cap^-2."""
    r_min = M_cap ** -2

    def fn(r):
        re = np.maximum(r, r_min)
        return (1.0 + np.sin(omega * re)) / np.sqrt(re)

    return Kernel("osc_sing", fn, 2.0 * M_cap, True, dict(omega=omega, M_cap=M_cap))


def zero() -> Kernel:
    return Kernel("zero", lambda r: np.zeros_like(r), 0.0)


def constant(c=1.0) -> Kernel:
    c = float(c)
    return Kernel("constant", lambda r: np.full_like(r, c), abs(c), False, dict(c=c))


_CATALOG = {
    "trunc_lj": trunc_lj,
    "osc_sing": osc_sing,
    "zero": zero,
    "constant": constant,
}


def builtin_kernels() -> dict[str, Callable[..., Kernel]]:
    return dict(_CATALOG)


def get_kernel(name: str, **params) -> Kernel:
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise LookupError(
            f"unknown kernel {name!r}; known: {', '.join(sorted(_CATALOG))}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# forces


def _pair_weights(kernel, X):
    diff = X[None, :, :] - X[:, None, :]  # diff[i, j] = x_j - x_i
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    A = np.zeros_like(dist)
    pos = dist > 0
    if pos.any():
        A[pos] = kernel(dist[pos])
    return A, diff


def velocity_field(kernel: Kernel, X: np.ndarray) -> np.ndarray:
    """Model velocities of all particles, shape (N, d)."""
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    A, diff = _pair_weights(kernel, X)
    contrib = A[:, :, None] * diff
    # summing in sorted order makes the result independent of particle labels
    contrib.sort(axis=1)
    return contrib.sum(axis=1) / N


def eval_force(kernel: Kernel, index: int, positions: np.ndarray) -> np.ndarray:
    X = np.asarray(positions, dtype=float)
    N = X.shape[0]
    diff = X - X[index]
    dist = np.linalg.norm(diff, axis=1)
    A = np.zeros(N)
    pos = dist > 0
    if pos.any():
        A[pos] = kernel(dist[pos])
    contrib = A[:, None] * diff
    contrib.sort(axis=0)
    return contrib.sum(axis=0) / N


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    positions: np.ndarray  # (m+1, N, d)
    times: np.ndarray  # (m+1,)
    seed: int = 0
    kernel_name: str = ""
    step_dt: float = 0.0
    kernel: Kernel | None = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def N(self) -> int:
        return self.positions.shape[1]

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def max_pairwise_distance(self) -> float:
        best = 0.0
        for X in self.positions:
            diff = X[:, None, :] - X[None, :, :]
            best = max(best, float(np.sqrt(np.max(np.sum(diff * diff, axis=-1)))))
        return best


def uniform_times(T: float, m: int) -> np.ndarray:
    return T * np.arange(m + 1) / m


def radius_bound(kernel: Kernel, initial: np.ndarray, T: float) -> float:
    """Radius of the ball containing every particle on [0, T]."""
    c0 = float(np.max(np.linalg.norm(initial, axis=-1))) if len(initial) else 0.0
    return c0 * math.exp(2.0 * kernel.sup_bound * T)


def sample_initial(d: int, N: int, L: float, seed: int, run: int = 0) -> np.ndarray:
    """I.i.d. uniform points on [-L, L]^d from the Philox stream (seed, run)."""
    return stream(seed, run).uniform(-L, L, size=(N, d))


def simulate(kernel: Kernel, initial, T: float, m: int, substeps: int = 10,
             seed: int = 0) -> Trajectory:
    X = np.array(initial, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ValueError("initial positions must be a finite (N, d) array")
    if T <= 0 or m < 1 or substeps < 1:
        raise ValueError("need T > 0, m >= 1 and substeps >= 1")
    dt = T / (m * substeps)
    bound = radius_bound(kernel, X, T)
    limit = 10.0 * bound if bound > 0 else 0.0

    out = np.empty((m + 1,) + X.shape)
    out[0] = X
    f = lambda Y: velocity_field(kernel, Y)
    for k in range(1, m + 1):
        for _ in range(substeps):
            k1 = f(X)
            k2 = f(X + 0.5 * dt * k1)
            k3 = f(X + 0.5 * dt * k2)
            k4 = f(X + dt * k3)
            X = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rmax = float(np.max(np.linalg.norm(X, axis=-1)))
        if not np.isfinite(rmax) or rmax > limit * (1 + 1e-12):
            raise SimulationError(
                f"particles left the radius bound at t={k * T / m:g}: "
                f"|x|={rmax:g} > 10 * {bound:g}")
        out[k] = X
    return Trajectory(out, uniform_times(T, m), seed, kernel.name, dt, kernel)


def finite_difference_velocities(traj: Trajectory) -> np.ndarray:
    """Backward differences at t_1..t_m, shape (m, N, d)."""
    if traj.m < 1:
        raise ValueError("need at least two snapshots")
    dt = np.diff(traj.times)
    return (traj.positions[1:] - traj.positions[:-1]) / dt[:, None, None]


def model_velocities(kernel: Kernel, traj: Trajectory) -> np.ndarray:
    """Exact model velocities at t_1..t_m (used for closed-loop checks)."""
    return np.stack([velocity_field(kernel, X) for X in traj.positions[1:]])


# ---------------------------------------------------------------------------
# persistence


def save_trajectory(traj: Trajectory, path) -> tuple[Path, Path]:
    path = Path(path)
    meta_path = path.with_suffix(".json")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "particle"] + [f"c{l}" for l in range(traj.d)])
        for k, t in enumerate(traj.times):
            for i in range(traj.N):
                w.writerow([f"{t:.17g}", i] + [f"{x:.17g}" for x in traj.positions[k, i]])
    meta = dict(d=traj.d, N=traj.N, T=traj.T, m=traj.m, seed=int(traj.seed),
                kernel_name=traj.kernel_name, step_dt=traj.step_dt)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return path, meta_path


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    d, N, m = int(meta["d"]), int(meta["N"]), int(meta["m"])
    pos = np.empty((m + 1, N, d))
    times = np.empty(m + 1)
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if header[:2] != ["t", "particle"] or len(header) != d + 2:
            raise ValueError(f"{path}: unexpected header {header}")
        n = 0
        for n, row in enumerate(rows, 1):
            k, i = divmod(n - 1, N)
            times[k] = float(row[0])
            if int(row[1]) != i:
                raise ValueError(f"{path}: rows out of order at line {n + 1}")
            pos[k, i] = [float(x) for x in row[2:]]
        if n != (m + 1) * N:
            raise ValueError(f"{path}: expected {(m + 1) * N} rows, found {n}")
    return Trajectory(pos, times, int(meta["seed"]), meta["kernel_name"],
                      float(meta["step_dt"]))
