"""Command-line interface: config ingestion, solving, scanning, checking,
and Monte Carlo validation.

Configs are UTF-8 JSON with row-major nested arrays for matrices.  With
"time_invariant": true the single A/B/G matrices are broadcast over the
horizon N; otherwise A/B/G are lists of N per-step matrices.  Exit codes:
0 success, 1 input/validation error, 2 non-convergence.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import simulate as sim
from .errors import WsteerError
from .objective import (
    Policy,
    convexity_certificate,
    evaluate,
    grad_theta,
    grad_uff,
    hessian_theta,
)
from .problem import Gaussian, SteeringProblem, TimeVaryingLinearSystem, assemble, causality_mask, validate
from .simulate import _num_threads
from .solver import (
    SolverOptions,
    count_strict_local_minima,
    line_scan,
    solve,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2


def _fail(msg):
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def _matrix(cfg, key):
    if key not in cfg:
        raise ValueError(f"config missing field '{key}'")
    return np.asarray(cfg[key], dtype=float)


def load_config(path):
    """Parse a problem config; raises ValueError naming the offending field."""
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    if "N" not in cfg:
        raise ValueError("config missing field 'N'")
    N = int(cfg["N"])
    if N < 1:
        raise ValueError("field 'N' must be >= 1")

    if cfg.get("time_invariant", False):
        A = _matrix(cfg, "A")
        B = _matrix(cfg, "B")
        G = _matrix(cfg, "G")
        for name, M in (("A", A), ("B", B), ("G", G)):
            if M.ndim != 2:
                raise ValueError(f"field '{name}' must be a matrix when time_invariant")
        system = TimeVaryingLinearSystem.time_invariant(A, B, G, N)
    else:
        seqs = {}
        for name in ("A", "B", "G"):
            M = _matrix(cfg, name)
            if M.ndim != 3 or M.shape[0] != N:
                raise ValueError(
                    f"field '{name}' must be a list of N={N} matrices "
                    "(or set time_invariant: true)"
                )
            seqs[name] = tuple(M[k] for k in range(N))
        system = TimeVaryingLinearSystem(seqs["A"], seqs["B"], seqs["G"])

    mu0 = _matrix(cfg, "mu0").reshape(-1)
    S0 = _matrix(cfg, "S0")
    Sw = _matrix(cfg, "Sw")
    mud = _matrix(cfg, "mud").reshape(-1)
    Sd = _matrix(cfg, "Sd")
    if "lambda" not in cfg:
        raise ValueError("config missing field 'lambda'")
    lam = float(cfg["lambda"])

    problem = SteeringProblem(
        system=system,
        initial=Gaussian(mean=mu0, cov=S0),
        noise_cov=Sw,
        desired=Gaussian(mean=mud, cov=Sd),
        lam=lam,
    )
    return problem, cfg


def solver_options_from_config(cfg):
    raw = cfg.get("solver", {})
    kwargs = {}
    for key in ("max_ccp_iters", "newton_max_iters"):
        if key in raw:
            kwargs[key] = int(raw[key])
    for key in ("obj_rel_tol", "stationarity_tol"):
        if key in raw:
            kwargs[key] = float(raw[key])
    if "newton" in raw:
        kwargs["newton"] = str(raw["newton"])
    theta_init = raw.get("theta_init", "zero")
    if isinstance(theta_init, str):
        if theta_init != "zero":
            raise ValueError("solver.theta_init must be 'zero' or a matrix")
    else:
        kwargs["theta_init"] = np.asarray(theta_init, dtype=float)
    return SolverOptions(**kwargs)


def _solution_payload(problem, sol):
    rep = sol.report
    cert = rep.certificate
    return {
        "dimensions": {
            "N": problem.system.horizon,
            "n_x": problem.system.n_x,
            "n_u": problem.system.n_u,
            "n_w": problem.system.n_w,
        },
        "u_ff": sol.u_ff.tolist(),
        "Theta": sol.Theta.tolist(),
        "K": sol.K.tolist(),
        "objective": {
            "J": rep.J, "J1": rep.J1, "J2": rep.J2, "J3": rep.J3, "J4": rep.J4,
            "W2_sq": rep.W2_sq, "cost_to_go": rep.cost_to_go,
        },
        "terminal": {
            "mean": rep.terminal.mean.tolist(),
            "cov": rep.terminal.cov.tolist(),
        },
        "certificate": {
            "kind": cert.kind if cert else None,
            "dominance_gap": cert.dominance_gap if cert else None,
            "lambda_min_hessian": cert.lambda_min_hessian if cert else None,
        },
        "trace": {
            "iterations": sol.trace.iterations,
            "termination": sol.trace.termination,
            "final_J": sol.trace.records[-1].J if sol.trace.records else None,
            "final_residual": sol.trace.records[-1].residual if sol.trace.records else None,
        },
    }


def cmd_solve(config_path, out_path):
    try:
        problem, cfg = load_config(config_path)
    except (OSError, ValueError, json.JSONDecodeError, WsteerError) as e:
        return _fail(str(e))
    violations = validate(problem)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INPUT
    try:
        options = solver_options_from_config(cfg)
        sol = solve(problem, options)
    except (ValueError, WsteerError) as e:
        return _fail(str(e))

    payload = _solution_payload(problem, sol)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    print(
        f"solved: J={sol.report.J:.12g} termination={sol.trace.termination} "
        f"iterations={sol.trace.iterations} -> {out_path}"
    )
    if sol.trace.termination == "max_iters":
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _scan_one_lambda(problem_a, problem_b, cfg_a, cfg_b, lam, grid):
    pa = SteeringProblem(problem_a.system, problem_a.initial, problem_a.noise_cov,
                         problem_a.desired, lam)
    pb = SteeringProblem(problem_b.system, problem_b.initial, problem_b.noise_cov,
                         problem_b.desired, lam)
    sol_a = solve(pa, solver_options_from_config(cfg_a))
    sol_b = solve(pb, solver_options_from_config(cfg_b))
    ops_a = assemble(pa)
    samples = line_scan(ops_a, lam, Policy(sol_a.u_ff, sol_a.Theta),
                        Policy(sol_b.u_ff, sol_b.Theta), grid)
    minima = count_strict_local_minima([s.J for s in samples])
    return lam, samples, minima


def cmd_scan(config_a, config_b, gamma_min, gamma_max, points, lambda_sweep, out_csv):
    try:
        problem_a, cfg_a = load_config(config_a)
        problem_b, cfg_b = load_config(config_b)
    except (OSError, ValueError, json.JSONDecodeError, WsteerError) as e:
        return _fail(str(e))

    sa, sb = problem_a.system, problem_b.system
    if (sa.horizon, sa.n_x, sa.n_u, sa.n_w) != (sb.horizon, sb.n_x, sb.n_u, sb.n_w):
        return _fail("configs have mismatched system dimensions")
    for prob, name in ((problem_a, config_a), (problem_b, config_b)):
        violations = validate(prob)
        if violations:
            for v in violations:
                print(f"validation ({name}): {v}", file=sys.stderr)
            return EXIT_INPUT
    if points < 2:
        return _fail("need at least 2 grid points")

    grid = np.linspace(gamma_min, gamma_max, points)
    lams = lambda_sweep if lambda_sweep else [problem_a.lam]

    try:
        if len(lams) > 1 and _num_threads() > 1:
            with ThreadPoolExecutor(max_workers=min(_num_threads(), len(lams))) as pool:
                results = list(pool.map(
                    lambda lam: _scan_one_lambda(problem_a, problem_b, cfg_a, cfg_b, lam, grid),
                    lams,
                ))
        else:
            results = [_scan_one_lambda(problem_a, problem_b, cfg_a, cfg_b, lam, grid)
                       for lam in lams]
    except (ValueError, WsteerError) as e:
        return _fail(str(e))

    with open(out_csv, "w", encoding="utf-8") as fh:
        fh.write("lambda,gamma,J,J1,J2,J3,J4\n")
        for lam, samples, _ in results:
            for s in samples:
                fh.write(f"{lam!r},{s.gamma!r},{s.J!r},{s.J1!r},{s.J2!r},{s.J3!r},{s.J4!r}\n")

    for lam, _, minima in results:
        print(f"lambda={lam:g}: strict local minima on grid = {minima}")
    print(f"wrote {out_csv} ({len(lams)} lambda value(s) x {points} points); "
          f"max local minima over sweep = {max(m for _, _, m in results)}")
    return EXIT_OK


def _fd_grad_check(ops, lam, mask, rng):
    """Relative errors of the analytic gradients against central differences."""
    n_uff = ops.N * ops.n_u
    u = 0.5 * rng.standard_normal(n_uff)
    Theta = mask.project(0.2 * rng.standard_normal(mask.theta_shape))

    def J_of(u_vec, T):
        return evaluate(ops, lam, Policy(u_vec, T)).J

    gu = grad_uff(ops, lam, u)
    fd_u = np.empty_like(u)
    for i in range(u.size):
        h = max(1e-6, 1e-6 * abs(u[i]))
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        fd_u[i] = (J_of(up, Theta) - J_of(um, Theta)) / (2 * h)
    err_u = np.linalg.norm(gu - fd_u) / max(1.0, np.linalg.norm(gu))

    gt = grad_theta(ops, lam, Theta)
    fd_t = np.empty_like(gt)
    for r in range(Theta.shape[0]):
        for c in range(Theta.shape[1]):
            h = max(1e-6, 1e-6 * abs(Theta[r, c]))
            Tp, Tm = Theta.copy(), Theta.copy()
            Tp[r, c] += h
            Tm[r, c] -= h
            fd_t[r, c] = (J_of(u, Tp) - J_of(u, Tm)) / (2 * h)
    err_t = np.linalg.norm(gt - fd_t) / max(1.0, np.linalg.norm(gt))

    H = hessian_theta(ops, lam, Theta)
    fd_h = np.empty_like(H)
    flat = Theta.reshape(-1, order="F")
    for j in range(flat.size):
        h = max(1e-6, 1e-6 * abs(flat[j]))
        fp, fm = flat.copy(), flat.copy()
        fp[j] += h
        fm[j] -= h
        gp = grad_theta(ops, lam, fp.reshape(Theta.shape, order="F"))
        gm = grad_theta(ops, lam, fm.reshape(Theta.shape, order="F"))
        fd_h[:, j] = (gp - gm).reshape(-1, order="F") / (2 * h)
    err_h = np.linalg.norm(H - fd_h) / max(1.0, np.linalg.norm(H))
    return err_u, err_t, err_h


def cmd_check(config_path):
    try:
        problem, cfg = load_config(config_path)
    except (OSError, ValueError, json.JSONDecodeError, WsteerError) as e:
        return _fail(str(e))

    rows = []
    try:
        ops = assemble(problem)
        smin = float(np.linalg.eigvalsh(ops.Stilde)[0])
        rows.append(("Stilde positive definite", bool(smin > 0.0), f"min eig {smin:.3e}"))
    except WsteerError as e:
        rows.append(("Stilde positive definite", False, str(e)))
        _print_check_table(rows)
        return EXIT_INPUT

    mask = causality_mask(ops.N, ops.n_u, ops.n_x)
    lam = problem.lam
    rng = np.random.default_rng(0)
    err_u, err_t, err_h = _fd_grad_check(ops, lam, mask, rng)
    rows.append(("grad_uff vs finite differences", bool(err_u <= 1e-6), f"rel err {err_u:.3e}"))
    rows.append(("grad_theta vs finite differences", bool(err_t <= 1e-6), f"rel err {err_t:.3e}"))
    rows.append(("hessian_theta vs finite differences", bool(err_h <= 1e-5), f"rel err {err_h:.3e}"))

    def _certificate_row(label, Theta):
        # dominance (or lam = 0) implies a PD Hessian; report the eigenvalue,
        # and count the row pass/fail only when the implication applies
        cert = convexity_certificate(ops, lam, Theta, mode="dominance")
        hmin = float(np.linalg.eigvalsh(hessian_theta(ops, lam, Theta))[0])
        detail = f"dominance gap {cert.dominance_gap:.3e}, min eig Hess {hmin:.3e}"
        if cert.kind or lam == 0.0:
            rows.append((label, bool(hmin > 0.0), detail))
        else:
            rows.append((label, None, detail + " (not dominated)"))

    _certificate_row("Hessian PD at Theta=0 (certificate)", np.zeros(mask.theta_shape))

    if not validate(problem):
        try:
            sol = solve(problem, solver_options_from_config(cfg))
            _certificate_row("Hessian PD at Theta* (certificate)", sol.Theta)
        except WsteerError as e:
            rows.append(("Hessian PD at Theta* (certificate)", None, f"not solved: {e}"))
    else:
        rows.append(("Hessian PD at Theta* (certificate)", None, "not solved (validation)"))

    _print_check_table(rows)
    failed = [name for name, ok, _ in rows if ok is False]
    if failed:
        print(f"first failing check: {failed[0]}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def _print_check_table(rows):
    width = max(len(name) for name, _, _ in rows) + 2
    for name, ok, detail in rows:
        status = "PASS" if ok is True else ("FAIL" if ok is False else "INFO")
        print(f"{name:<{width}} {status}  {detail}")


def cmd_simulate(config_path, solution_path, samples=None, seed=None, out_path=None):
    try:
        problem, cfg = load_config(config_path)
        with open(solution_path, "r", encoding="utf-8") as fh:
            sol = json.load(fh)
    except (OSError, ValueError, json.JSONDecodeError, WsteerError) as e:
        return _fail(str(e))

    sim_cfg = cfg.get("simulation", {})
    if samples is None:
        samples = int(sim_cfg.get("samples", 100000))
    if seed is None:
        seed = int(sim_cfg.get("seed", 42))

    violations = validate(problem)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INPUT

    sysm = problem.system
    u_ff = np.asarray(sol.get("u_ff", []), dtype=float)
    Theta = np.asarray(sol.get("Theta", []), dtype=float)
    want_u = sysm.horizon * sysm.n_u
    want_T = (sysm.horizon * sysm.n_u, (sysm.horizon + 1) * sysm.n_x)
    if u_ff.shape != (want_u,) or Theta.shape != want_T:
        return _fail(
            f"solution dimensions {u_ff.shape}/{Theta.shape} do not match config "
            f"({(want_u,)}/{want_T})"
        )
    if samples < 2:
        return _fail("need samples >= 2")

    report = sim.rollout(problem, Policy(u_ff, Theta), samples, seed)
    payload = {
        "samples": report.samples,
        "seed": report.seed,
        "empirical_mean": report.empirical_mean.tolist(),
        "empirical_cov": report.empirical_cov.tolist(),
        "predicted_mean": report.predicted.mean.tolist(),
        "predicted_cov": report.predicted.cov.tolist(),
        "w2_sq_empirical_vs_desired": report.w2_sq_empirical_vs_desired,
        "mean_err": report.mean_err,
        "cov_err": report.cov_err,
        "mean_band": report.mean_band,
        "cov_band": report.cov_band,
        "within_band": report.within_band,
    }
    text = json.dumps(payload, indent=1)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")
    print(text)
    print(
        f"mean_err {report.mean_err:.3e} (band {report.mean_band:.3e}); "
        f"cov_err {report.cov_err:.3e} (band {report.cov_band:.3e}); "
        f"within 5-sigma band: {report.within_band}"
    )
    return EXIT_OK if report.within_band else EXIT_INPUT


def _parse_lambda_sweep(text):
    if not text:
        return None
    return [float(tok) for tok in text.split(",") if tok.strip()]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="wsteer",
        description="Covariance steering with a squared Wasserstein terminal cost.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a steering problem")
    p_solve.add_argument("config")
    p_solve.add_argument("-o", "--output", default="solution.json")

    p_scan = sub.add_parser("scan", help="objective line scan between two solved policies")
    p_scan.add_argument("config_a")
    p_scan.add_argument("config_b")
    p_scan.add_argument("--gamma-min", type=float, default=-0.5)
    p_scan.add_argument("--gamma-max", type=float, default=1.5)
    p_scan.add_argument("--points", type=int, default=401)
    p_scan.add_argument("--lambda-sweep", default="",
                        help="comma-separated lambda overrides, e.g. 0.1,1,10,100,2000")
    p_scan.add_argument("-o", "--output", default="scan.csv")

    p_check = sub.add_parser("check", help="finite-difference and certificate checks")
    p_check.add_argument("config")

    p_sim = sub.add_parser("simulate", help="Monte Carlo validation of a solved policy")
    p_sim.add_argument("config")
    p_sim.add_argument("solution")
    p_sim.add_argument("--samples", type=int, default=None,
                       help="overrides config simulation.samples (default 100000)")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="overrides config simulation.seed (default 42)")
    p_sim.add_argument("-o", "--output", default=None)

    args = parser.parse_args(argv)
    if args.command == "solve":
        return cmd_solve(args.config, args.output)
    if args.command == "scan":
        return cmd_scan(args.config_a, args.config_b, args.gamma_min,
                        args.gamma_max, args.points,
                        _parse_lambda_sweep(args.lambda_sweep), args.output)
    if args.command == "check":
        return cmd_check(args.config)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.solution, args.samples,
                            args.seed, args.output)
    return EXIT_INPUT  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
