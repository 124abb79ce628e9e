"""Policy-gain transforms and seeded Monte Carlo closed-loop rollouts.

The feedback gain has two equivalent parameterizations related by
Theta = K (I - Hu K)^(-1) and K = (I + Theta Hu)^(-1) Theta; for causal
(block-lower-triangular) gains both inverses exist because the products
Theta Hu and Hu K are strictly block lower triangular.

Rollouts simulate the step dynamics with the K-form feedback acting on state
deviations from the analytically propagated mean trajectory.  Noise is drawn
from counter-based per-sample streams keyed on (seed, sample index), so the
result is bitwise reproducible and independent of how samples are chunked
across threads.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import SingularTransformError
from .objective import terminal_gaussian, wasserstein_sq_gaussian
from .problem import Gaussian, assemble


def _num_threads():
    """Parallelism cap from WSTEER_THREADS (default: all cores)."""
    env = os.environ.get("WSTEER_THREADS", "")
    if env.strip():
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return max(1, os.cpu_count() or 1)


def theta_to_k(Theta, Hu):
    """K = (I + Theta Hu)^(-1) Theta; preserves the causal block pattern."""
    Theta = np.asarray(Theta, dtype=float)
    M = np.eye(Theta.shape[0]) + Theta @ Hu
    return np.linalg.solve(M, Theta)


def k_to_theta(K, Hu):
    """Theta = K (I - Hu K)^(-1).

    Raises SingularTransformError when I - Hu K is numerically singular,
    which cannot happen for causal K.
    """
    K = np.asarray(K, dtype=float)
    M = np.eye(Hu.shape[0]) - Hu @ K
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[-1] <= 0.0 or sv[-1] < 1e-13 * sv[0]:
        raise SingularTransformError(
            "I - Hu K is singular to working precision (non-causal K?)"
        )
    return np.linalg.solve(M.T, K.T).T


@dataclass(frozen=True)
class RolloutReport:
    samples: int
    seed: int
    empirical_mean: np.ndarray
    empirical_cov: np.ndarray
    predicted: Gaussian
    w2_sq_empirical_vs_desired: float
    mean_err: float
    cov_err: float
    mean_band: float
    cov_band: float

    @property
    def within_band(self):
        return self.mean_err <= self.mean_band and self.cov_err <= self.cov_band


def _sample_noise(seed, n_samples, n_x, N, n_w):
    """Standard-normal draws, one Philox stream per sample keyed (seed, i).

    Returns (Z0, Zw) with shapes (n_samples, n_x) and (n_samples, N, n_w).
    Because every sample owns its stream, the values are independent of how
    samples are chunked or ordered during generation.
    """
    per = n_x + N * n_w
    Z = np.empty((n_samples, per))
    keys = np.empty((n_samples, 2), dtype=np.uint64)
    keys[:, 0] = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)
    keys[:, 1] = np.arange(n_samples, dtype=np.uint64)
    for i in range(n_samples):
        bitgen = np.random.Philox(key=keys[i])
        Z[i] = np.random.Generator(bitgen).standard_normal(per)
    return Z[:, :n_x], Z[:, n_x:].reshape(n_samples, N, n_w)


def _closed_loop_states(problem, policy, Hu, Z0, Zw):
    """Forward-simulate all samples; returns the stacked states (S, (N+1)*n_x)."""
    sysm = problem.system
    N, n_x, n_u = sysm.horizon, sysm.n_x, sysm.n_u
    S = Z0.shape[0]

    L0 = np.linalg.cholesky(problem.initial.cov)
    Lw = np.linalg.cholesky(problem.noise_cov)

    # mean trajectory driven by the feedforward alone
    xbar = np.empty((N + 1, n_x))
    xbar[0] = problem.initial.mean
    for k in range(N):
        uk = policy.u_ff[k * n_u:(k + 1) * n_u]
        xbar[k + 1] = sysm.A[k] @ xbar[k] + sysm.B[k] @ uk

    K = theta_to_k(policy.Theta, Hu)

    X = np.empty((S, (N + 1) * n_x))
    X[:, :n_x] = problem.initial.mean + Z0 @ L0.T
    for k in range(N):
        dev = X[:, :(k + 1) * n_x] - xbar[:k + 1].reshape(-1)
        Kk = K[k * n_u:(k + 1) * n_u, :(k + 1) * n_x]
        U = policy.u_ff[k * n_u:(k + 1) * n_u] + dev @ Kk.T
        Wk = Zw[:, k, :] @ Lw.T
        X[:, (k + 1) * n_x:(k + 2) * n_x] = (
            X[:, k * n_x:(k + 1) * n_x] @ sysm.A[k].T
            + U @ sysm.B[k].T + Wk @ sysm.G[k].T
        )
    return X


def rollout(problem, policy, samples, seed):
    """Monte Carlo closed-loop rollout; deterministic given (samples, seed).

    Returns a RolloutReport comparing the empirical terminal moments with the
    analytic prediction; the 5-sigma sampling bands are
    5*sqrt(trace(cov)/samples) for the mean and 5*sqrt(2/samples)*||cov||_F
    for the covariance.
    """
    if samples < 2:
        raise ValueError("rollout needs samples >= 2")
    sysm = problem.system
    N, n_x, n_w = sysm.horizon, sysm.n_x, sysm.n_w

    ops = assemble(problem)
    Z0, Zw = _sample_noise(seed, samples, n_x, N, n_w)
    X = _closed_loop_states(problem, policy, ops.Hu, Z0, Zw)
    XN = X[:, N * n_x:]

    mean = XN.sum(axis=0) / samples
    Xc = XN - mean
    cov = (Xc.T @ Xc) / (samples - 1)
    cov = 0.5 * (cov + cov.T)

    predicted = terminal_gaussian(ops, policy)

    mean_err = float(np.linalg.norm(mean - predicted.mean))
    cov_err = float(np.linalg.norm(cov - predicted.cov))
    mean_band = 5.0 * float(np.sqrt(np.trace(predicted.cov) / samples))
    cov_band = 5.0 * float(np.sqrt(2.0 / samples)) * float(np.linalg.norm(predicted.cov))

    w2 = wasserstein_sq_gaussian(Gaussian(mean=mean, cov=cov), problem.desired)

    return RolloutReport(
        samples=int(samples), seed=int(seed),
        empirical_mean=mean, empirical_cov=cov, predicted=predicted,
        w2_sq_empirical_vs_desired=w2,
        mean_err=mean_err, cov_err=cov_err,
        mean_band=mean_band, cov_band=cov_band,
    )
