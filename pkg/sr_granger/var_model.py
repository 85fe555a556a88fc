"""VAR(p) model representation, derived quantities and random-model generators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from sr_granger.cli.logging_config import get_logger
from sr_granger.errors import (
    DimensionMismatch,
    InvalidModel,
    NonConvergent,
    NotPositiveDefinite,
    SingularPhi,
    Unachievable,
    UnstableFit,
)
from sr_granger.linalg import (
    Matrix,
    cholesky_right,
    companion_matrix,
    log_det_pd,
    solve_dlyap,
    spectral_radius_companion,
    symmetrize,
)

logger = get_logger(__name__)

# binary-chop tolerances for gamma, rho and GC targets (sqrt of machine epsilon)
CHOP_TOL = float(np.sqrt(np.finfo(float).eps))
MAX_RETRIES = 100
BRACKET_LIMIT = 2.0**60
MAX_BISECTIONS = 200
COEFFICIENT_DECAY = 1.0


@dataclass(frozen=True)
class Partition:
    """Split of n variables into a target block x (first nx) and source block y."""

    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.nx < 1 or self.ny < 1:
            raise DimensionMismatch(
                f"partition needs nx >= 1 and ny >= 1, got nx={self.nx}, ny={self.ny}"
            )

    @property
    def n(self) -> int:
        return self.nx + self.ny

    @property
    def x(self) -> slice:
        return slice(0, self.nx)

    @property
    def y(self) -> slice:
        return slice(self.nx, self.n)

    def check(self, n: int) -> None:
        if n != self.n:
            raise DimensionMismatch(
                f"partition {self.nx}+{self.ny} does not match {n} variables"
            )

    def lagged_x(self, p: int) -> NDArray[np.intp]:
        """Indices of the x variables in a lag-major stacked state of p lags."""
        return np.array([k * self.n + j for k in range(p) for j in range(self.nx)])

    def lagged_y(self, p: int) -> NDArray[np.intp]:
        """Indices of the y variables in a lag-major stacked state of p lags."""
        return np.array(
            [k * self.n + self.nx + j for k in range(p) for j in range(self.ny)]
        )

    @classmethod
    def from_nx(cls, n: int, nx: int) -> Partition:
        return cls(nx=nx, ny=n - nx)


def _readonly(values: ArrayLike) -> Matrix:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class VarParams:
    """A VAR(p) model: coefficient block row ``A = [A_1 ... A_p]`` and covariance Sigma.

    Construction only checks shapes. Fitted estimates need not be stable, so the
    model invariants are enforced by :meth:`check` and :meth:`ensure_stable`.
    """

    A: Matrix
    Sigma: Matrix

    def __post_init__(self) -> None:
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=np.float64))
        n = Sigma.shape[0]
        if n == 0 or Sigma.shape != (n, n):
            raise DimensionMismatch(f"Sigma must be square and non-empty, got {Sigma.shape}")
        if A.shape[0] != n or A.shape[1] == 0 or A.shape[1] % n != 0:
            raise DimensionMismatch(
                f"A must be {n} x (p*{n}) with p >= 1, got {A.shape}"
            )
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "Sigma", _readonly(Sigma))

    @property
    def n(self) -> int:
        return int(self.Sigma.shape[0])

    @property
    def p(self) -> int:
        return int(self.A.shape[1] // self.n)

    @property
    def lags(self) -> NDArray[np.float64]:
        """Coefficients as a (p, n, n) array; ``lags[k-1]`` is A_k."""
        return self.A.reshape(self.n, self.p, self.n).transpose(1, 0, 2)

    @property
    def spectral_radius(self) -> float:
        return spectral_radius_companion(self.A)

    @property
    def is_stable(self) -> bool:
        return self.spectral_radius < 1.0

    def log_generalised_correlation(self) -> float:
        """gamma = -log|Sigma| + sum_i log Sigma_ii."""
        return float(-log_det_pd(self.Sigma) + np.sum(np.log(np.diag(self.Sigma))))

    def check(self) -> VarParams:
        """Validate the model invariants; raise InvalidModel naming the one violated."""
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.Sigma))):
            raise InvalidModel("model entries must be finite")
        if not np.allclose(self.Sigma, self.Sigma.T, rtol=1e-12, atol=1e-14):
            raise InvalidModel("Sigma must be symmetric")
        try:
            cholesky_right(self.Sigma)
        except NotPositiveDefinite as err:
            raise InvalidModel("Sigma must be positive-definite") from err
        rho = self.spectral_radius
        if rho >= 1.0:
            raise InvalidModel(f"spectral radius must be < 1, got {rho:.12g}")
        return self

    def ensure_stable(self) -> VarParams:
        rho = self.spectral_radius
        if rho >= 1.0:
            raise UnstableFit(f"model is unstable: spectral radius {rho:.6g}")
        return self

    def is_null(self, partition: Partition) -> bool:
        """True when every A_k,xy block is exactly zero."""
        partition.check(self.n)
        return not np.any(self.lags[:, partition.x, partition.y])

    def replace(self, A: ArrayLike | None = None, Sigma: ArrayLike | None = None) -> VarParams:
        return VarParams(
            A=self.A if A is None else np.asarray(A),
            Sigma=self.Sigma if Sigma is None else np.asarray(Sigma),
        )

    @classmethod
    def from_lags(cls, lags: ArrayLike, Sigma: ArrayLike) -> VarParams:
        """Build from a (p, n, n) coefficient array."""
        arr = np.asarray(lags, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatch(f"lags must be (p, n, n), got shape {arr.shape}")
        p, n, _ = arr.shape
        return cls(A=arr.transpose(1, 0, 2).reshape(n, p * n), Sigma=np.asarray(Sigma))


@dataclass(frozen=True, eq=False)
class AutocovMatrix:
    """Stacked autocovariance bold-Gamma; block (k, l) is Gamma_{l-k}."""

    gamma: Matrix
    model: VarParams = field(repr=False)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def p(self) -> int:
        return self.model.p

    def block(self, k: int, l: int) -> Matrix:
        n = self.n
        return self.gamma[k * n : (k + 1) * n, l * n : (l + 1) * n]

    def lag(self, k: int) -> Matrix:
        """Gamma_k = E[u_t u_{t-k}^T] for any integer k, via Yule-Walker beyond p-1."""
        if k < 0:
            return self.lag(-k).T
        if k < self.p:
            return self.block(0, k).copy()
        return self.sequence(k)[k]

    def sequence(self, max_lag: int) -> list[Matrix]:
        """Gamma_0 ... Gamma_max_lag."""
        seq = [self.block(0, k).copy() for k in range(min(self.p, max_lag + 1))]
        lags = self.model.lags
        for k in range(len(seq), max_lag + 1):
            nxt = np.zeros((self.n, self.n))
            for j in range(1, self.p + 1):
                prev = seq[k - j] if k - j >= 0 else seq[j - k].T
                nxt += lags[j - 1] @ prev
            seq.append(nxt)
        return seq


@dataclass(frozen=True, eq=False)
class SpectralPoint:
    """Transfer function, its inverse and the CPSD at one angular frequency."""

    omega: float
    Phi: NDArray[np.complex128]
    Psi: NDArray[np.complex128]
    S: NDArray[np.complex128]


@dataclass(frozen=True)
class Null:
    """Random-model mode: all A_k,xy blocks zero."""


@dataclass(frozen=True)
class TargetGC:
    """Random-model mode: population single-regression GC equal to ``gc``."""

    gc: float

    def __post_init__(self) -> None:
        if not self.gc > 0:
            raise ValueError(f"target GC must be positive, got {self.gc}")


ModelMode = Null | TargetGC


def companion(model: VarParams) -> Matrix:
    return companion_matrix(model.A)


def stacked_sigma(model: VarParams) -> Matrix:
    """Sigma zero-padded to pn x pn in the top-left block."""
    n, p = model.n, model.p
    out = np.zeros((p * n, p * n))
    out[:n, :n] = model.Sigma
    return out


def autocovariance(model: VarParams) -> AutocovMatrix:
    """Stationary autocovariance of the stacked process via DLYAP."""
    gamma = solve_dlyap(companion(model), stacked_sigma(model))
    return AutocovMatrix(gamma=gamma, model=model)


def transfer_function(
    model: VarParams, omegas: ArrayLike
) -> tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Phi(w) = I - sum_k A_k e^{-iwk} and Psi = Phi^-1 on a frequency grid.

    Returns two arrays of shape (len(omegas), n, n).
    """
    w = np.atleast_1d(np.asarray(omegas, dtype=np.float64))
    k = np.arange(1, model.p + 1)
    phase = np.exp(-1j * np.outer(w, k))
    Phi = np.eye(model.n)[None, :, :] - np.einsum("wk,kij->wij", phase, model.lags)
    try:
        Psi = np.linalg.inv(Phi)
    except np.linalg.LinAlgError as err:
        raise SingularPhi("transfer function is singular on the frequency grid") from err
    if not np.all(np.isfinite(Psi)):
        raise SingularPhi("transfer function inverse is not finite")
    return Phi, Psi


def cpsd(model: VarParams, omegas: ArrayLike) -> NDArray[np.complex128]:
    """S(w) = Psi(w) Sigma Psi(w)^* on a frequency grid, shape (len(omegas), n, n)."""
    _, Psi = transfer_function(model, omegas)
    return Psi @ model.Sigma @ np.conj(Psi.transpose(0, 2, 1))


def spectral_point(model: VarParams, omega: float) -> SpectralPoint:
    Phi, Psi = transfer_function(model, [omega])
    S = Psi[0] @ model.Sigma @ Psi[0].conj().T
    return SpectralPoint(omega=float(omega), Phi=Phi[0], Psi=Psi[0], S=0.5 * (S + S.conj().T))


def _random_orthogonal(n: int, rng: np.random.Generator) -> Matrix:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def random_correlation(
    n: int,
    gamma: float,
    rng: np.random.Generator,
    *,
    tol: float = CHOP_TOL,
    max_retries: int = MAX_RETRIES,
) -> Matrix:
    """Random n x n correlation matrix with log-generalised correlation ``gamma``.

    A random orthogonal basis and chi2(1) variances give a covariance; a constant
    added to the variances is binary-chopped until gamma is met within ``tol``.

    Raises:
        Unachievable: gamma could not be reached within ``max_retries`` restarts.
    """
    if n < 1:
        raise DimensionMismatch(f"n must be >= 1, got {n}")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    if n == 1:
        if gamma > tol:
            raise Unachievable("a 1x1 correlation matrix has gamma = 0")
        return np.ones((1, 1))

    for attempt in range(1, max_retries + 1):
        M = _random_orthogonal(n, rng)
        v = rng.chisquare(1.0, size=n)

        def achieved(c: float, M: Matrix = M, v: NDArray[np.float64] = v) -> float:
            V = (M * (v + c)) @ M.T
            return float(-np.sum(np.log(v + c)) + np.sum(np.log(np.diag(V))))

        if achieved(0.0) < gamma:
            continue

        lo, hi = 0.0, 1.0
        while achieved(hi) > gamma + tol:
            lo, hi = hi, 2.0 * hi
            if hi > BRACKET_LIMIT:
                raise Unachievable(f"could not bracket gamma = {gamma}")
        c = hi
        g = achieved(c)
        for _ in range(MAX_BISECTIONS):
            if abs(g - gamma) <= tol:
                break
            c = 0.5 * (lo + hi)
            g = achieved(c)
            if g > gamma:
                lo = c
            else:
                hi = c
        else:
            raise Unachievable(f"binary chop on gamma = {gamma} did not converge")

        V = symmetrize((M * (v + c)) @ M.T)
        d = 1.0 / np.sqrt(np.diag(V))
        corr = symmetrize(V * np.outer(d, d))
        np.fill_diagonal(corr, 1.0)
        logger.debug("random correlation", n=n, gamma=gamma, achieved=g, attempts=attempt)
        return corr

    raise Unachievable(f"gamma = {gamma} not reached after {max_retries} restarts")


def weight_to_radius(lags: NDArray[np.float64], rho: float) -> NDArray[np.float64]:
    """Exponentially weight A_k -> lam^k A_k so that the spectral radius is ``rho``."""
    p, n, _ = lags.shape
    current = spectral_radius_companion(lags.transpose(1, 0, 2).reshape(n, p * n))
    if current <= 0.0:
        raise Unachievable("coefficients have zero spectral radius; cannot rescale")
    lam = rho / current
    return lags * (lam ** np.arange(1, p + 1))[:, None, None]


def random_var(
    n: int,
    p: int,
    partition: Partition,
    rho: float,
    gamma: float,
    mode: ModelMode,
    rng: np.random.Generator,
    *,
    tol: float = CHOP_TOL,
) -> VarParams:
    """Draw a random stable VAR(p) with spectral radius ``rho``.

    Coefficients are iid standard normal scaled by ``exp(-sqrt(p))``; residuals
    are a random correlation matrix with log-generalised correlation ``gamma``.
    ``Null()`` zeroes every A_k,xy block; ``TargetGC(F)`` scales those blocks by
    a constant chosen by binary chop so the population GC equals F.
    """
    from sr_granger.gc_estimators import gc_time_sr

    partition.check(n)
    if p < 1:
        raise DimensionMismatch(f"model order must be >= 1, got {p}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")

    Sigma = random_correlation(n, gamma, rng, tol=tol)
    raw = rng.standard_normal((p, n, n)) * np.exp(-np.sqrt(p) * COEFFICIENT_DECAY)

    def build(c: float) -> VarParams:
        lags = raw.copy()
        lags[:, partition.x, partition.y] *= c
        return VarParams.from_lags(weight_to_radius(lags, rho), Sigma)

    if isinstance(mode, Null):
        model = build(0.0)
        logger.debug("random null model", n=n, p=p, rho=model.spectral_radius)
        return model.check()

    target = mode.gc

    def gc_at(c: float) -> float:
        try:
            return gc_time_sr(build(c), partition).value
        except (NonConvergent, SingularPhi, UnstableFit) as e:
            raise Unachievable(f"GC at coupling scale {c:.6g} failed: {e}") from e

    lo, hi = 0.0, 1.0
    g_lo, g = 0.0, gc_at(hi)
    while g < target - tol:
        lo, g_lo = hi, g
        hi = 2.0 * hi
        if hi > BRACKET_LIMIT:
            raise Unachievable(f"could not bracket target GC {target}")
        g = gc_at(hi)
        if g < g_lo - tol:
            raise Unachievable(f"GC decreased while bracketing target GC {target}")
    g_hi = g
    c = hi
    for _ in range(MAX_BISECTIONS):
        if abs(g - target) <= tol:
            break
        c = 0.5 * (lo + hi)
        g = gc_at(c)
        # the chop assumes GC is monotone in the scale on [lo, hi]
        if not g_lo - tol <= g <= g_hi + tol:
            raise Unachievable(
                f"GC is not monotone in the coupling scale on [{lo:.6g}, {hi:.6g}]"
            )
        if g < target:
            lo, g_lo = c, g
        else:
            hi, g_hi = c, g
    else:
        raise Unachievable(f"binary chop on target GC {target} did not converge")

    logger.debug("random model at target GC", n=n, p=p, gc=g, scale=c)
    return build(c).check()
