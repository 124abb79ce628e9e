"""Problem data model, validation, and assembly of the lifted block operators.

The horizon-N system x_{k+1} = A_k x_k + B_k u_k + G_k w_k is lifted to
x = Gamma x0 + Hu u + Hw w over the stacked state/input/noise vectors, and the
total state covariance factor Stilde = Gamma S0 Gamma^T + Hw W Hw^T is
assembled once and shared immutably by the objective, solver, and simulator.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, IndexOrderError, NotPDError
from .matops import symmetrize

# Relative singular-value threshold for the G_k full-rank requirement.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class TimeVaryingLinearSystem:
    """Per-step matrices of a discrete-time linear system over a fixed horizon.

    A, B, G are tuples of length N holding the step-k matrices; shapes are
    (n_x, n_x), (n_x, n_u) and (n_x, n_w) respectively.
    """

    A: tuple
    B: tuple
    G: tuple

    def __post_init__(self):
        A = tuple(np.asarray(M, dtype=float) for M in self.A)
        B = tuple(np.asarray(M, dtype=float) for M in self.B)
        G = tuple(np.asarray(M, dtype=float) for M in self.G)
        if not (len(A) == len(B) == len(G)) or len(A) < 1:
            raise DimensionMismatchError(
                "A, B, G must be nonempty sequences of equal length"
            )
        n_x = A[0].shape[0]
        for k, (Ak, Bk, Gk) in enumerate(zip(A, B, G)):
            if Ak.shape != (n_x, n_x):
                raise DimensionMismatchError(f"A[{k}] has shape {Ak.shape}, want ({n_x},{n_x})")
            if Bk.ndim != 2 or Bk.shape[0] != n_x:
                raise DimensionMismatchError(f"B[{k}] has shape {Bk.shape}, want ({n_x},n_u)")
            if Gk.ndim != 2 or Gk.shape[0] != n_x:
                raise DimensionMismatchError(f"G[{k}] has shape {Gk.shape}, want ({n_x},n_w)")
            if Bk.shape[1] != B[0].shape[1]:
                raise DimensionMismatchError(f"B[{k}] input dimension differs from B[0]")
            if Gk.shape[1] != G[0].shape[1]:
                raise DimensionMismatchError(f"G[{k}] noise dimension differs from G[0]")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)

    @classmethod
    def time_invariant(cls, A, B, G, horizon):
        """Broadcast single A, B, G matrices over the given horizon."""
        if horizon < 1:
            raise DimensionMismatchError("horizon must be >= 1")
        return cls((A,) * horizon, (B,) * horizon, (G,) * horizon)

    @property
    def horizon(self):
        return len(self.A)

    @property
    def n_x(self):
        return self.A[0].shape[0]

    @property
    def n_u(self):
        return self.B[0].shape[1]

    @property
    def n_w(self):
        return self.G[0].shape[1]


@dataclass(frozen=True)
class Gaussian:
    """Mean vector and covariance matrix of a normal distribution.

    Covariance is only required PSD here; strict definiteness is enforced by
    `validate` where the problem formulation demands it (empirical estimates
    may be singular).
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatchError(
                f"covariance shape {cov.shape} does not match mean length {mean.size}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.size


@dataclass(frozen=True)
class SteeringProblem:
    """Covariance steering instance: system, initial/noise/desired data, weight.

    lam is the weight on the squared Wasserstein terminal cost.  It must be
    nonnegative; lam = 0 degenerates to the pure minimum-energy problem and is
    kept representable so diagnostic paths can exercise it, while `validate`
    flags it for the full steering formulation.
    """

    system: TimeVaryingLinearSystem
    initial: Gaussian
    noise_cov: np.ndarray
    desired: Gaussian
    lam: float

    def __post_init__(self):
        noise = np.asarray(self.noise_cov, dtype=float)
        if noise.ndim != 2 or noise.shape[0] != noise.shape[1]:
            raise DimensionMismatchError("noise covariance must be square")
        if not np.isfinite(self.lam) or self.lam < 0.0:
            raise ValueError(f"lambda must be a finite nonnegative real, got {self.lam}")
        object.__setattr__(self, "noise_cov", noise)
        object.__setattr__(self, "lam", float(self.lam))


@dataclass(frozen=True)
class BlockOperators:
    """Lifted operators of a steering problem plus caches reused downstream.

    Gamma maps x0 to the stacked state, Hu/Hw map stacked inputs/noises, F
    selects the terminal state, and Stilde = Gamma S0 Gamma^T + Hw W Hw^T is
    the (always PD) covariance factor of the uncontrolled stacked state.
    """

    N: int
    n_x: int
    n_u: int
    n_w: int
    Gamma: np.ndarray
    Hu: np.ndarray
    Hw: np.ndarray
    W: np.ndarray
    Stilde: np.ndarray
    F: np.ndarray
    # problem data carried along for objective/solver formulas
    mu0: np.ndarray
    mud: np.ndarray
    Sd: np.ndarray
    # caches
    FHu: np.ndarray = field(repr=False, default=None)
    FGamma_mu0: np.ndarray = field(repr=False, default=None)
    sqrt_Sd: np.ndarray = field(repr=False, default=None)
    isqrt_Sd: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class CausalityMask:
    """Index bookkeeping for the block-lower-triangular feedback pattern.

    free_entries indexes vec(Theta) (column stacking) at the entries of the
    blocks theta_{i,j} with j <= i, ordered block row-major over (i, j) and
    column-major within each block.  The complement gathers every entry that
    the causality constraints force to zero, including the final block column.
    """

    N: int
    n_u: int
    n_x: int
    free_entries: np.ndarray
    complement: np.ndarray

    @property
    def theta_shape(self):
        return (self.N * self.n_u, (self.N + 1) * self.n_x)

    def project(self, Theta):
        """Zero out the constrained (complement) entries of Theta."""
        Theta = np.asarray(Theta, dtype=float)
        if Theta.shape != self.theta_shape:
            raise DimensionMismatchError(
                f"Theta shape {Theta.shape} != {self.theta_shape}"
            )
        flat = Theta.reshape(-1, order="F").copy()
        flat[self.complement] = 0.0
        return flat.reshape(self.theta_shape, order="F")

    def is_causal(self, Theta, tol=0.0):
        Theta = np.asarray(Theta, dtype=float)
        if Theta.shape != self.theta_shape:
            return False
        flat = Theta.reshape(-1, order="F")
        return bool(np.all(np.abs(flat[self.complement]) <= tol))


def state_transition(system, k, n):
    """Product A_{k-1} ... A_n, with the empty product (k == n) the identity."""
    if k < n:
        raise IndexOrderError(f"state_transition needs k >= n, got k={k}, n={n}")
    if n < 0 or k > system.horizon:
        raise IndexOrderError(
            f"indices out of range: 0 <= n <= k <= N={system.horizon}"
        )
    Phi = np.eye(system.n_x)
    for j in range(n, k):
        Phi = system.A[j] @ Phi
    return Phi


def causality_mask(N, n_u, n_x):
    """Build the free/constrained index split of vec(Theta).

    Free blocks are theta_{i,j} with 0 <= j <= i <= N-1, giving
    n_u*n_x*N*(N+1)/2 free scalars; ordering is block row-major over (i, j)
    with column-major entries inside each block.
    """
    rows = N * n_u
    free = []
    for i in range(N):
        for j in range(i + 1):
            for c in range(n_x):
                col = j * n_x + c
                for r in range(n_u):
                    row = i * n_u + r
                    free.append(col * rows + row)
    free = np.asarray(free, dtype=np.intp)
    total = rows * (N + 1) * n_x
    comp_mask = np.ones(total, dtype=bool)
    comp_mask[free] = False
    complement = np.nonzero(comp_mask)[0]
    return CausalityMask(N=N, n_u=n_u, n_x=n_x, free_entries=free, complement=complement)


def assemble(problem):
    """Assemble the lifted block operators for a steering problem.

    Raises NotPDError if the assembled Stilde is not numerically positive
    definite (it always is when S0, Sw are PD and the G_k have full row rank).
    """
    sysm = problem.system
    N, n_x, n_u, n_w = sysm.horizon, sysm.n_x, sysm.n_u, sysm.n_w

    Gamma = np.vstack([state_transition(sysm, k, 0) for k in range(N + 1)])

    Hu = np.zeros(((N + 1) * n_x, N * n_u))
    Hw = np.zeros(((N + 1) * n_x, N * n_w))
    for k in range(1, N + 1):
        for j in range(k):
            Phi = state_transition(sysm, k, j + 1)
            Hu[k * n_x:(k + 1) * n_x, j * n_u:(j + 1) * n_u] = Phi @ sysm.B[j]
            Hw[k * n_x:(k + 1) * n_x, j * n_w:(j + 1) * n_w] = Phi @ sysm.G[j]

    Sw = np.asarray(problem.noise_cov, dtype=float)
    W = np.kron(np.eye(N), Sw)

    S0 = problem.initial.cov
    Stilde = symmetrize(Gamma @ S0 @ Gamma.T + Hw @ W @ Hw.T)
    eigvals = np.linalg.eigvalsh(Stilde)
    if eigvals[0] <= 1e-12 * max(eigvals[-1], 0.0):
        raise NotPDError(
            f"Stilde is not positive definite (min eigenvalue {eigvals[0]:.3e}); "
            "check that S0, Sw are PD and every G_k has full row rank"
        )

    F = np.zeros((n_x, (N + 1) * n_x))
    F[:, N * n_x:] = np.eye(n_x)

    Sd = problem.desired.cov
    sd_eigvals, sd_V = np.linalg.eigh(symmetrize(Sd))
    if sd_eigvals[0] > 0.0:
        root = np.sqrt(sd_eigvals)
        sqrt_Sd = symmetrize((sd_V * root) @ sd_V.T)
        isqrt_Sd = symmetrize((sd_V / root) @ sd_V.T)
    else:
        sqrt_Sd = None
        isqrt_Sd = None

    return BlockOperators(
        N=N, n_x=n_x, n_u=n_u, n_w=n_w,
        Gamma=Gamma, Hu=Hu, Hw=Hw, W=W, Stilde=Stilde, F=F,
        mu0=problem.initial.mean.copy(),
        mud=problem.desired.mean.copy(),
        Sd=np.asarray(Sd, dtype=float),
        FHu=Hu[N * n_x:, :].copy(),
        FGamma_mu0=Gamma[N * n_x:, :] @ problem.initial.mean,
        sqrt_Sd=sqrt_Sd,
        isqrt_Sd=isqrt_Sd,
    )


def validate(problem):
    """Return the list of formulation violations (empty means valid).

    Checks the positive definiteness of S0, Sw, Sd, positivity of lambda,
    dimensional consistency, and full rank of every G_k.
    """
    violations = []
    sysm = problem.system
    n_x, n_w = sysm.n_x, sysm.n_w

    if problem.initial.dim != n_x:
        violations.append(
            f"initial mean dimension {problem.initial.dim} != state dimension {n_x}"
        )
    if problem.desired.dim != n_x:
        violations.append(
            f"desired mean dimension {problem.desired.dim} != state dimension {n_x}"
        )
    if problem.noise_cov.shape != (n_w, n_w):
        violations.append(
            f"noise covariance shape {problem.noise_cov.shape} != ({n_w},{n_w})"
        )

    def _check_pd(M, what):
        M = np.asarray(M, dtype=float)
        if M.shape[0] != M.shape[1]:
            violations.append(f"{what} is not square")
            return
        if np.abs(M - M.T).max() > 1e-10 * max(np.abs(M).max(), 1.0):
            violations.append(f"{what} is not symmetric")
            return
        eigvals = np.linalg.eigvalsh(0.5 * (M + M.T))
        if eigvals[0] <= 1e-12 * max(eigvals[-1], 0.0):
            violations.append(f"{what} not PD (min eigenvalue {eigvals[0]:.3e})")

    _check_pd(problem.initial.cov, "initial covariance")
    _check_pd(problem.noise_cov, "noise covariance")
    _check_pd(problem.desired.cov, "desired covariance")

    if not (problem.lam > 0.0):
        violations.append(f"lambda must be > 0, got {problem.lam}")

    for k, Gk in enumerate(sysm.G):
        sv = np.linalg.svd(Gk, compute_uv=False)
        if sv.size == 0 or sv[-1] <= RANK_TOL * sv[0] or sv[0] == 0.0:
            violations.append(f"G[{k}] is rank deficient")

    return violations
