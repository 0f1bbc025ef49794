"""kernel-infer command line: simulate, learn, sweep-m, montecarlo, diagnose.

Every command reads one JSON config (see ``ExperimentConfig``), writes CSV/JSON
artifacts plus ``manifest.json`` into the output directory, and is fully
deterministic given the config.

Exit codes: 0 success, 1 numerical non-convergence, 2 bad input or config,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .basis import SplineModel
from .config import ConfigError, ExperimentConfig, parallel_map
from .diagnostics import (Misfit, coercivity_snapshot, discrete_coercivity,
                          estimate_cT, trajectory_bound_check)
from .dynamics import (KernelEvaluationError, SimulationError, load_trajectory,
                       model_velocities, sample_initial, save_trajectory, simulate)
from .learn import learn_kernel, m_sweep, montecarlo_average
from .measures import save_rows
from .rng import stream

log = logging.getLogger("kernel_infer")

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT, EXIT_IO = 0, 1, 2, 3


class InputError(Exception):
    pass


class NumericalFailure(Exception):
    pass


def _simulate_run(cfg: ExperimentConfig, kernel, N: int, run: int):
    x0 = sample_initial(cfg.d, N, cfg.L, cfg.seed, run=run)
    return simulate(kernel, x0, cfg.T, cfg.m, cfg.substeps, cfg.seed)


def _require_N(cfg):
    Ns = cfg.N_values()
    if not Ns:
        raise ConfigError("config needs N or N_list")
    return Ns


def _velocities(kernel, traj, exact):
    if not exact:
        return None
    if kernel is None:
        raise InputError("--exact-velocities needs the generating kernel in the config")
    return model_velocities(kernel, traj)


def _reconstruction_rows(model: SplineModel, reference, n):
    r = np.linspace(0.0, model.space.upper, n)
    a_hat = model(r)
    if reference is None:
        return ["r", "a_hat"], [(float(x), float(y)) for x, y in zip(r, a_hat)]
    a_true = reference(r)
    return ["r", "a_true", "a_hat"], [
        (float(x), float(t), float(y)) for x, t, y in zip(r, a_true, a_hat)]


# ---------------------------------------------------------------------------
# commands; each returns the list of artifacts it wrote


def cmd_simulate(cfg: ExperimentConfig, out: Path, exact: bool = False):
    kernel = cfg.make_kernel()
    Ns = _require_N(cfg)
    trajs = parallel_map(lambda kN: _simulate_run(cfg, kernel, kN[1], kN[0]),
                         list(enumerate(Ns)))
    written = []
    for N, traj in zip(Ns, trajs):
        written += save_trajectory(traj, out / f"traj_N{N}.csv")
    return written, True


def _learn_inputs(cfg: ExperimentConfig):
    """Yield (label, N, trajectory, reference kernel)."""
    if cfg.trajectory:
        path = Path(cfg.trajectory)
        if not path.exists() or not path.with_suffix(".json").exists():
            raise InputError(f"trajectory file not found: {path}")
        try:
            traj = load_trajectory(path)
        except (ValueError, KeyError, IndexError) as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
        kernel = cfg.make_kernel() if cfg.kernel["name"] == traj.kernel_name else None
        return [(f"N{traj.N}", traj.N, traj, kernel)]
    kernel = cfg.make_kernel()
    Ns = _require_N(cfg)
    trajs = parallel_map(lambda kN: _simulate_run(cfg, kernel, kN[1], kN[0]),
                         list(enumerate(Ns)))
    return [(f"N{N}", N, t, kernel) for N, t in zip(Ns, trajs)]


def cmd_learn(cfg: ExperimentConfig, out: Path, exact: bool = False):
    inputs = _learn_inputs(cfg)

    def fit(item):
        label, N, traj, kernel = item
        vel = _velocities(kernel, traj, exact)
        return learn_kernel(traj, cfg.D_for(N), cfg.M, vel, kernel)

    reports = parallel_map(fit, inputs)
    written, ok = [], True
    for (label, N, traj, kernel), rep in zip(inputs, reports):
        ok &= rep.converged
        p = out / f"learn_{label}.json"
        rep.save(p)
        header, rows = _reconstruction_rows(rep.model, kernel, cfg.grid_points)
        q = out / f"reconstruction_{label}.csv"
        save_rows(q, header, rows)
        written += [p, q]
    return written, ok


def cmd_sweep_m(cfg: ExperimentConfig, out: Path, exact: bool = False):
    label, N, traj, kernel = _learn_inputs(cfg)[0]
    M_list = cfg.M_list if cfg.M_list is not None else [cfg.M]
    sweep = m_sweep(traj, cfg.D_for(N), M_list, _velocities(kernel, traj, exact))
    p = out / "sweep_m.csv"
    save_rows(p, ["M", "objective", "Mstar"],
              [(M, obj, sweep.m_star) for M, obj in sweep.pairs()])
    ok = all(r.converged for _, _, r in sweep.rows)
    return [p], ok


def cmd_montecarlo(cfg: ExperimentConfig, out: Path, exact: bool = False):
    runs = cfg.runs if cfg.runs is not None else list(range(cfg.theta))
    if len(runs) < 2:
        raise ConfigError("Monte Carlo averaging needs theta >= 2")
    if cfg.N is None and not cfg.N_list:
        raise ConfigError("config needs N")
    kernel = cfg.make_kernel()
    res = montecarlo_average(kernel, cfg, runs=runs, exact_velocities=exact)
    p = out / "montecarlo_band.csv"
    save_rows(p, ["r", "mean", "lo", "hi"],
              [tuple(float(v) for v in row) for row in res.band_rows()])
    q = out / "montecarlo.json"
    q.write_text(json.dumps(dict(
        mean=res.mean.to_json(), std=res.std.tolist(),
        runs=[r.to_json() for r in res.reports]), indent=2) + "\n")
    return [p, q], all(r.converged for r in res.reports)


def _fixture_report(cfg: ExperimentConfig):
    """Coercivity identities on regular polygons, misfit K(r) = a(r) r."""
    kernel = cfg.make_kernel()
    K = Misfit(kernel, lambda r: np.zeros_like(r))
    rng = stream(cfg.seed)
    rows = []
    for _ in range(cfg.theta):
        r = float(rng.uniform(0.2, 2.0))
        theta0 = float(rng.uniform(0, 2 * math.pi))
        shift = rng.uniform(-1, 1, size=2)
        if cfg.fixture == "triangle":
            ang = theta0 + 2 * math.pi * np.arange(3) / 3
            X = (r / math.sqrt(3)) * np.stack([np.cos(ang), np.sin(ang)], 1) + shift
            expected = float(K(np.array(r))) ** 2 / 3
        elif cfg.fixture == "square":
            ang = theta0 + math.pi * np.arange(4) / 2
            X = r * np.stack([np.cos(ang), np.sin(ang)], 1) + shift
            kd, ks = K(np.array([2 * r, math.sqrt(2) * r]))
            expected = float((kd + math.sqrt(2) * ks) ** 2 / 16)
        elif cfg.fixture == "pair":
            p = rng.uniform(-1, 1, size=cfg.d)
            u = rng.standard_normal(cfg.d)
            X = np.stack([p, p + r * u / np.linalg.norm(u)])
            expected = None
        else:
            raise ConfigError(f"unknown fixture {cfg.fixture!r}")
        rep = coercivity_snapshot(X, K)
        rows.append(dict(r=r, lhs=rep.lhs, rhs=rep.rhs_unscaled, ratio=rep.ratio,
                         expected_lhs=expected))
    return rows


def cmd_diagnose(cfg: ExperimentConfig, out: Path, exact: bool = False):
    if cfg.fixture:
        rows = _fixture_report(cfg)
        p = out / f"coercivity_{cfg.fixture}.json"
        p.write_text(json.dumps(rows, indent=2) + "\n")
        return [p], True

    kernel = cfg.make_kernel()
    Ns = _require_N(cfg)

    def one(kN):
        run, N = kN
        traj = _simulate_run(cfg, kernel, N, run)
        vel = model_velocities(kernel, traj) if exact else None
        rep = learn_kernel(traj, cfg.D_for(N), cfg.M, vel, kernel)
        coer = discrete_coercivity(traj, Misfit(kernel, rep.model))
        try:
            cT = estimate_cT(traj, kernel, rep.model, vel)
        except ValueError:
            cT = None
        bound = trajectory_bound_check(kernel, rep.model, traj.positions[0],
                                       cfg.T, cfg.m, cfg.substeps)
        return N, rep, coer, cT, bound

    results = parallel_map(one, list(enumerate(Ns)))
    p = out / "coercivity_sweep.csv"
    save_rows(p, ["N", "lhs", "rhs", "ratio"],
              [(N, c.lhs, c.rhs_unscaled, c.ratio) for N, _, c, _, _ in results])
    q = out / "diagnostics.json"
    q.write_text(json.dumps([dict(
        N=N, objective=rep.objective, l2_rho_error=rep.l2_rho_error,
        coercivity=c.to_json(), c_T=cT, bound_check=b.to_json())
        for N, rep, c, cT, b in results], indent=2, default=_json_default) + "\n")
    ok = all(rep.converged for _, rep, _, _, _ in results)
    return [p, q], ok


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(type(x).__name__)


COMMANDS = {
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "sweep-m": cmd_sweep_m,
    "montecarlo": cmd_montecarlo,
    "diagnose": cmd_diagnose,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="kernel-infer",
        description="Learn interaction kernels of particle systems from trajectories.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", help="output directory (overrides config 'out')")
    p.add_argument("--seed", type=int, help="master seed (overrides config 'seed')")
    p.add_argument("--exact-velocities", action="store_true",
                   help="use exact model velocities instead of finite differences (testing)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        path = Path(args.config)
        if not path.exists():
            raise InputError(f"config file not found: {path}")
        cfg = ExperimentConfig.load(path)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.__post_init__()
        if args.out:
            cfg.out = args.out
    except (InputError, ConfigError) as exc:
        print(f"kernel-infer: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out = Path(cfg.out)
    created = not out.exists()
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"kernel-infer: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_IO

    code = None
    try:
        written, ok = COMMANDS[args.command](cfg, out, args.exact_velocities)
    except (InputError, ConfigError, LookupError) as exc:
        print(f"kernel-infer: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    except (SimulationError, KernelEvaluationError, ArithmeticError) as exc:
        print(f"kernel-infer: numerical failure: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except OSError as exc:
        print(f"kernel-infer: I/O error: {exc}", file=sys.stderr)
        code = EXIT_IO
    except ValueError as exc:
        print(f"kernel-infer: {exc}", file=sys.stderr)
        code = EXIT_INPUT
    if code is not None:
        # leave no empty output directory behind after a failed run
        if created and out.is_dir() and not any(out.iterdir()):
            out.rmdir()
        return code

    manifest = dict(command=args.command, config_hash=cfg.digest(), config=cfg.to_dict(),
                    artifacts=[str(p) for p in written],
                    wall_clock_s=time.perf_counter() - started, version=__version__)
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        print(f"kernel-infer: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not ok:
        print("kernel-infer: solver did not converge for every run", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
