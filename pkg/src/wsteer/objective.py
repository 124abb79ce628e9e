"""Objective evaluation, analytic gradients, exact Hessian, and certificates.

The total cost splits as J = J1(u_ff) + J2(Theta) + J3(Theta) - J4(Theta):

    J1 = ||u_ff||^2 + lam * ||F(Gamma mu0 + Hu u_ff) - mud||^2
    J2 = trace(Theta Stilde Theta^T)
    J3 = lam * trace(Omega Stilde Omega^T + Sd)
    J4 = 2 lam * trace((Sd^(1/2) Omega Stilde Omega^T Sd^(1/2))^(1/2))

with Omega = F(I + Hu Theta).  J1 + J2 + J3 is convex quadratic and J4 is
convex (a nuclear norm of an affine map), so J is a difference of convex
functions; the J4 gradient involves the matrix geometric mean
Sd # (Omega Stilde Omega^T)^(-1), and the Hessian of J has an exact four-term
expression assembled here and cross-checked against finite differences in the
test suite.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotPDError,
    SingularTerminalCovarianceError,
    WsteerError,
)
from .matops import (
    commutation_apply,
    geometric_mean,
    kron_sum,
    pd_inverse,
    sqrtm_psd,
    symmetrize,
)
from .problem import Gaussian


@dataclass(frozen=True)
class Policy:
    """Feedforward vector u_ff (N*n_u) and feedback gain Theta (N*n_u x (N+1)*n_x).

    Theta must satisfy the causal block-lower-triangular pattern; use
    CausalityMask.project / is_causal to enforce or check it.
    """

    u_ff: np.ndarray
    Theta: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u_ff, dtype=float).reshape(-1)
        T = np.asarray(self.Theta, dtype=float)
        if T.ndim != 2:
            raise DimensionMismatchError("Theta must be a 2-D matrix")
        object.__setattr__(self, "u_ff", u)
        object.__setattr__(self, "Theta", T)

    @classmethod
    def zeros(cls, N, n_u, n_x):
        return cls(np.zeros(N * n_u), np.zeros((N * n_u, (N + 1) * n_x)))


@dataclass(frozen=True)
class Certificate:
    """Outcome of a convexity check.

    kind is "DominatedCovariance" when the terminal covariance dominates Sd in
    the Loewner order, "HessianPD" when the assembled Hessian is positive
    definite, or None when neither test passed.  dominance_gap records
    lambda_min(terminal covariance - Sd); lambda_min_hessian is filled when the
    spectral test ran.
    """

    kind: Optional[str]
    dominance_gap: Optional[float] = None
    lambda_min_hessian: Optional[float] = None


@dataclass(frozen=True)
class ObjectiveReport:
    J: float
    J1: float
    J2: float
    J3: float
    J4: float
    W2_sq: float
    cost_to_go: float
    terminal: Gaussian
    grad_uff: np.ndarray
    grad_theta: np.ndarray
    hessian_theta: Optional[np.ndarray] = None
    certificate: Optional[Certificate] = None


def omega(ops, Theta):
    """Terminal-state mixing matrix Omega = F(I + Hu Theta)."""
    Theta = np.asarray(Theta, dtype=float)
    q = (ops.N + 1) * ops.n_x
    if Theta.shape != (ops.N * ops.n_u, q):
        raise DimensionMismatchError(
            f"Theta shape {Theta.shape} != ({ops.N * ops.n_u}, {q})"
        )
    return ops.F + ops.FHu @ Theta


def terminal_covariance(ops, Theta):
    """Covariance of the terminal state, Omega Stilde Omega^T (always PD)."""
    Om = omega(ops, Theta)
    return symmetrize(Om @ ops.Stilde @ Om.T)


def terminal_gaussian(ops, policy):
    """Predicted terminal-state distribution under the given policy."""
    mean = ops.FGamma_mu0 + ops.FHu @ policy.u_ff
    return Gaussian(mean=mean, cov=terminal_covariance(ops, policy.Theta))


def wasserstein_sq_gaussian(g1, g2):
    """Squared 2-Wasserstein distance between two Gaussians.

    ||mu1 - mu2||^2 + trace(C1 + C2 - 2 (C2^(1/2) C1 C2^(1/2))^(1/2)); tiny
    negative round-off (within 1e-10 of the trace scale) is clamped to zero.
    """
    if g1.dim != g2.dim:
        raise DimensionMismatchError("Gaussians of different dimension")
    R2 = sqrtm_psd(g2.cov)
    cross = sqrtm_psd(symmetrize(R2 @ g1.cov @ R2))
    val = (
        float(np.dot(g1.mean - g2.mean, g1.mean - g2.mean))
        + np.trace(g1.cov) + np.trace(g2.cov) - 2.0 * np.trace(cross)
    )
    tol = 1e-10 * max(1.0, abs(np.trace(g1.cov)) + abs(np.trace(g2.cov)))
    if val < -tol:
        raise WsteerError(f"squared Wasserstein distance {val:.3e} below -{tol:.3e}")
    return max(val, 0.0)


def _terminal_cov_inverse(ops, Theta):
    """Inverse of Omega Stilde Omega^T with the rcond guard."""
    Y = terminal_covariance(ops, Theta)
    eigvals = np.linalg.eigvalsh(Y)
    if eigvals[0] <= 0.0 or eigvals[0] < 1e-13 * eigvals[-1]:
        raise SingularTerminalCovarianceError(
            f"terminal covariance has rcond ~ "
            f"{eigvals[0] / max(eigvals[-1], np.finfo(float).tiny):.3e} < 1e-13"
        )
    return Y, pd_inverse(Y)


def _require_sd_roots(ops):
    if ops.sqrt_Sd is None:
        raise NotPDError("desired covariance Sd is not positive definite")
    return ops.sqrt_Sd, ops.isqrt_Sd


def grad_uff(ops, lam, u_ff):
    """Gradient of J with respect to u_ff: 2 u_ff + 2 lam FHu^T (mean - mud)."""
    u_ff = np.asarray(u_ff, dtype=float).reshape(-1)
    mean = ops.FGamma_mu0 + ops.FHu @ u_ff
    return 2.0 * u_ff + 2.0 * lam * (ops.FHu.T @ (mean - ops.mud))


def grad_theta_j4(ops, lam, Theta):
    """Gradient of the concave-side term J4 alone.

    Equals 2 lam FHu^T (Sd # (Omega Stilde Omega^T)^(-1)) Omega Stilde.
    """
    if lam == 0.0:
        Theta = np.asarray(Theta, dtype=float)
        return np.zeros_like(Theta)
    _require_sd_roots(ops)
    Om = omega(ops, Theta)
    _, Yi = _terminal_cov_inverse(ops, Theta)
    Mt = geometric_mean(ops.Sd, Yi)
    return 2.0 * lam * (ops.FHu.T @ Mt @ Om @ ops.Stilde)


def grad_theta(ops, lam, Theta):
    """Full (unprojected) gradient of J with respect to Theta."""
    Theta = np.asarray(Theta, dtype=float)
    G = 2.0 * Theta @ ops.Stilde
    if lam != 0.0:
        Om = omega(ops, Theta)
        G = G + 2.0 * lam * (ops.FHu.T @ Om @ ops.Stilde)
        G = G - grad_theta_j4(ops, lam, Theta)
    return G


def hessian_theta(ops, lam, Theta):
    """Exact Hessian of J with respect to vec(Theta) (column stacking).

    Four terms: the constant 2(Stilde kron I) curvature of J2, the constant
    2 lam (Stilde kron FHu^T FHu) curvature of J3, and the two J4 curvature
    terms built from M = (Sd^(-1/2) Y^(-1) Sd^(-1/2))^(1/2) and
    Mtilde = Sd # Y^(-1) with Y the terminal covariance.  The assembled matrix
    is checked to be symmetric to 1e-8 relative and returned symmetrized.
    """
    Theta = np.asarray(Theta, dtype=float)
    p = ops.N * ops.n_u
    S = ops.Stilde
    H = 2.0 * np.kron(S, np.eye(p))
    if lam != 0.0:
        sqrt_Sd, isqrt_Sd = _require_sd_roots(ops)
        FHu = ops.FHu
        H = H + 2.0 * lam * np.kron(S, FHu.T @ FHu)

        Om = omega(ops, Theta)
        _, Yi = _terminal_cov_inverse(ops, Theta)
        M = sqrtm_psd(symmetrize(isqrt_Sd @ Yi @ isqrt_Sd))
        Nsim = sqrt_Sd @ M @ isqrt_Sd
        Mt = symmetrize(sqrt_Sd @ M @ sqrt_Sd)

        n_x = ops.n_x
        A = np.kron(Om @ S, FHu)
        B = A + commutation_apply(A, n_x, n_x)
        C = np.kron(Yi, Yi) @ B
        D = np.linalg.solve(kron_sum(Nsim, Nsim), C)
        H = H + 2.0 * lam * (A.T @ D)
        H = H - 2.0 * lam * np.kron(S, FHu.T @ Mt @ FHu)

    scale = np.linalg.norm(H)
    asym = np.linalg.norm(H - H.T)
    if asym > 1e-8 * max(scale, np.finfo(float).tiny):
        raise WsteerError(
            f"assembled Hessian asymmetry {asym:.3e} exceeds 1e-8 * {scale:.3e}"
        )
    return symmetrize(H)


def evaluate(ops, lam, policy, mask=None, want_hessian=False):
    """Evaluate J, its decomposition, the terminal law, and the gradients.

    When a CausalityMask is supplied the policy must already satisfy it.
    """
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    if mask is not None and not mask.is_causal(policy.Theta):
        raise ValueError("policy violates the causality pattern")

    u = policy.u_ff
    Theta = policy.Theta
    S = ops.Stilde

    mean = ops.FGamma_mu0 + ops.FHu @ u
    dmu = mean - ops.mud
    Om = omega(ops, Theta)
    Y = symmetrize(Om @ S @ Om.T)

    J1 = float(u @ u) + lam * float(dmu @ dmu)
    J2 = float(np.trace(Theta @ S @ Theta.T))

    sqrt_Sd, _ = _require_sd_roots(ops)
    try:
        cross = sqrtm_psd(symmetrize(sqrt_Sd @ Y @ sqrt_Sd))
    except WsteerError as e:
        raise type(e)(f"while computing (Sd^1/2 Y Sd^1/2)^1/2: {e}") from e
    trace_cross = float(np.trace(cross))

    J3 = lam * float(np.trace(Y) + np.trace(ops.Sd))
    J4 = 2.0 * lam * trace_cross
    J = J1 + J2 + J3 - J4

    w2 = float(dmu @ dmu) + float(np.trace(Y) + np.trace(ops.Sd)) - 2.0 * trace_cross
    tol = 1e-10 * max(1.0, abs(np.trace(Y)) + abs(np.trace(ops.Sd)))
    if w2 < -tol:
        raise WsteerError(f"squared Wasserstein distance {w2:.3e} below -{tol:.3e}")
    w2 = max(w2, 0.0)

    hess = hessian_theta(ops, lam, Theta) if want_hessian else None

    return ObjectiveReport(
        J=J, J1=J1, J2=J2, J3=J3, J4=J4,
        W2_sq=w2,
        cost_to_go=float(u @ u) + J2,
        terminal=Gaussian(mean=mean, cov=Y),
        grad_uff=grad_uff(ops, lam, u),
        grad_theta=grad_theta(ops, lam, Theta),
        hessian_theta=hess,
    )


def stationarity_residual(ops, lam, policy, mask):
    """Norm of the J gradient projected on the free (causal) entries of Theta.

    The input Theta is projected onto the causal pattern first, so entries on
    the constrained complement never influence the result; the Lagrangian
    stationarity condition holds iff this residual vanishes, because the
    multiplier terms are supported exactly on the complement.
    """
    Theta = mask.project(policy.Theta)
    G = grad_theta(ops, lam, Theta)
    return float(np.linalg.norm(G.reshape(-1, order="F")[mask.free_entries]))


def convexity_certificate(ops, lam, Theta, mode="dominance", psd_tol=None):
    """Check the sufficient convexity condition at the given Theta.

    mode "dominance" tests lambda_min(Omega Stilde Omega^T - Sd) >= -psd_tol
    (terminal covariance dominates Sd in the Loewner order, which implies a PD
    Hessian); mode "spectral" assembles the Hessian and reports its minimum
    eigenvalue.
    """
    Y = terminal_covariance(ops, Theta)
    gap = float(np.linalg.eigvalsh(Y - ops.Sd)[0])
    if mode == "dominance":
        if psd_tol is None:
            psd_tol = 1e-10 * max(1.0, float(np.linalg.eigvalsh(Y)[-1]))
        kind = "DominatedCovariance" if gap >= -psd_tol else None
        return Certificate(kind=kind, dominance_gap=gap)
    if mode == "spectral":
        Hmin = float(np.linalg.eigvalsh(hessian_theta(ops, lam, Theta))[0])
        kind = "HessianPD" if Hmin > 0.0 else None
        return Certificate(kind=kind, dominance_gap=gap, lambda_min_hessian=Hmin)
    raise ValueError(f"unknown certificate mode {mode!r}")
