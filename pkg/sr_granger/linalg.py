"""Dense linear-algebra kernels: eigenvalues, Cholesky, DLYAP and DARE solvers."""

from typing import Literal

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from sr_granger.cli.logging_config import get_logger
from sr_granger.errors import (
    DimensionMismatch,
    NonConvergent,
    NotPositiveDefinite,
    SingularInnovations,
)

logger = get_logger(__name__)

Matrix = NDArray[np.float64]
DlyapMethod = Literal["auto", "kronecker", "doubling"]

RTOL = 1e-10
EPS_STAB = 1e-9
KRONECKER_MAX_DIM = 64
# above this the "auto" method switches to doubling; the Kronecker system is m^2 x m^2
KRONECKER_AUTO_DIM = 16
DOUBLING_MAX_ITER = 100
DARE_MAX_ITER = 10_000
DARE_TOL = 1e-12


def as_square(M: ArrayLike, name: str = "matrix") -> Matrix:
    """Return ``M`` as a finite float square matrix or raise DimensionMismatch."""
    arr = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise DimensionMismatch(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch(f"{name} has non-finite entries")
    return arr


def symmetrize(M: Matrix) -> Matrix:
    return 0.5 * (M + M.T)


def companion_matrix(A: ArrayLike) -> Matrix:
    """Build the pn x pn companion matrix of an n x pn coefficient block row."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    n, pn = A.shape
    if n == 0 or pn == 0 or pn % n != 0:
        raise DimensionMismatch(f"coefficient block row has bad shape {A.shape}")
    comp = np.zeros((pn, pn))
    comp[:n, :] = A
    if pn > n:
        comp[n:, : pn - n] = np.eye(pn - n)
    return comp


def spectral_radius(M: ArrayLike) -> float:
    """Largest absolute eigenvalue of a square matrix."""
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(M))))


def spectral_radius_companion(A: ArrayLike) -> float:
    """Spectral radius of the companion matrix of ``A = [A_1 ... A_p]``."""
    return spectral_radius(companion_matrix(A))


def symmetric_eigenvalues(M: ArrayLike) -> NDArray[np.float64]:
    """Real eigenvalues of a symmetric matrix, sorted descending."""
    S = symmetrize(as_square(M))
    try:
        values = scipy.linalg.eigvalsh(S)
    except np.linalg.LinAlgError as err:
        raise NonConvergent(f"symmetric eigensolver failed: {err}") from err
    return np.asarray(values[::-1], dtype=np.float64)


def cholesky_right(B: ArrayLike) -> Matrix:
    """Upper-triangular R with R^T R = B."""
    S = symmetrize(as_square(B))
    try:
        return np.asarray(scipy.linalg.cholesky(S, lower=False), dtype=np.float64)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite("matrix is not positive-definite") from err


def log_det_pd(B: ArrayLike) -> float:
    """Log-determinant of a positive-definite matrix via its Cholesky factor."""
    R = cholesky_right(B)
    return float(2.0 * np.sum(np.log(np.diag(R))))


def _dlyap_kronecker(A: Matrix, Q: Matrix) -> Matrix:
    m = A.shape[0]
    # row-major vec: vec(A P A^T) = (A kron A) vec(P)
    lhs = np.eye(m * m) - np.kron(A, A)
    try:
        vec_p = scipy.linalg.solve(lhs, Q.reshape(-1))
    except np.linalg.LinAlgError as err:
        raise NonConvergent("Kronecker DLYAP system is singular") from err
    return np.asarray(vec_p, dtype=np.float64).reshape(m, m)


def _dlyap_doubling(A: Matrix, Q: Matrix) -> Matrix:
    P = Q.copy()
    Ak = A.copy()
    for iteration in range(1, DOUBLING_MAX_ITER + 1):
        increment = Ak @ P @ Ak.T
        P = P + increment
        Ak = Ak @ Ak
        if np.max(np.abs(increment)) <= np.finfo(float).eps * max(
            np.max(np.abs(P)), np.finfo(float).tiny
        ):
            logger.debug("dlyap doubling converged", iterations=iteration)
            return P
    raise NonConvergent(f"DLYAP doubling did not converge in {DOUBLING_MAX_ITER} steps")


def solve_dlyap(A: ArrayLike, Q: ArrayLike, *, method: DlyapMethod = "auto") -> Matrix:
    """Solve the discrete Lyapunov equation P - A P A^T = Q.

    Args:
        A: Stable square matrix (spectral radius < 1).
        Q: Symmetric right-hand side of the same dimension.
        method: ``"kronecker"`` (direct vectorized solve, dimension <= 64),
            ``"doubling"`` (Smith iteration) or ``"auto"``.

    Raises:
        NonConvergent: A is not stable or the solver failed its residual check.
        DimensionMismatch: Shapes disagree.
    """
    A = as_square(A, "A")
    Q = symmetrize(as_square(Q, "Q"))
    m = A.shape[0]
    if Q.shape[0] != m:
        raise DimensionMismatch(f"A is {m}x{m} but Q is {Q.shape[0]}x{Q.shape[0]}")

    rho = spectral_radius(A)
    if rho >= 1.0 - EPS_STAB:
        raise NonConvergent(f"DLYAP needs a stable A; spectral radius is {rho:.12g}")

    if method == "auto":
        method = "kronecker" if m <= KRONECKER_AUTO_DIM else "doubling"
    if method == "kronecker":
        if m > KRONECKER_MAX_DIM:
            raise DimensionMismatch(
                f"Kronecker DLYAP is limited to dimension {KRONECKER_MAX_DIM}, got {m}"
            )
        P = _dlyap_kronecker(A, Q)
    elif method == "doubling":
        P = _dlyap_doubling(A, Q)
    else:
        raise ValueError(f"Unknown DLYAP method: {method}")

    P = symmetrize(P)
    residual = np.max(np.abs(P - A @ P @ A.T - Q))
    scale = np.max(np.abs(Q)) + np.max(np.abs(A)) ** 2 * np.max(np.abs(P))
    if residual > RTOL * max(scale, np.finfo(float).tiny):
        raise NonConvergent(f"DLYAP residual {residual:.3g} exceeds tolerance")
    logger.debug("dlyap solved", dim=m, method=method, residual=float(residual))
    return P


def solve_dare(
    Ayy: ArrayLike,
    Axy: ArrayLike,
    Syy: ArrayLike,
    Syx: ArrayLike,
    Sxx: ArrayLike,
    *,
    max_iter: int = DARE_MAX_ITER,
    tol: float = DARE_TOL,
) -> tuple[Matrix, Matrix, Matrix]:
    """Solve the reduced-dimension DARE of the x-only innovations model.

    The recursion is the steady-state Kalman predictor covariance update

        SigmaR = Axy P Axy^T + Sxx
        K      = (Ayy P Axy^T + Syx) SigmaR^-1
        P      = Ayy P Ayy^T + Syy - K SigmaR K^T

    started from the ``Axy = 0`` solution.

    Returns:
        ``(P, SigmaR, K)``.

    Raises:
        NonConvergent: Iteration limit reached or residual check failed.
        SingularInnovations: SigmaR lost positive-definiteness at an iterate.
        NotPositiveDefinite: Sxx is not positive-definite.
    """
    Ayy = as_square(Ayy, "Ayy")
    m = Ayy.shape[0]
    Sxx = symmetrize(as_square(Sxx, "Sxx"))
    nx = Sxx.shape[0]
    Axy = np.asarray(Axy, dtype=np.float64).reshape(nx, m)
    Syx = np.asarray(Syx, dtype=np.float64).reshape(m, nx)
    Syy = symmetrize(as_square(Syy, "Syy"))
    if Syy.shape[0] != m:
        raise DimensionMismatch(f"Syy must be {m}x{m}, got {Syy.shape}")

    try:
        sxx_factor = scipy.linalg.cho_factor(Sxx)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite("Sxx is not positive-definite") from err

    partial = symmetrize(Syy - Syx @ scipy.linalg.cho_solve(sxx_factor, Syx.T))
    if spectral_radius(Ayy) < 1.0 - EPS_STAB:
        P = solve_dlyap(Ayy, partial)
    else:
        # no null solution to start from; the recursion from the one-step value
        # still converges to the stabilizing solution when it exists
        logger.debug("dare started without a null solution", dim=m)
        P = partial

    def riccati_step(P: Matrix) -> tuple[Matrix, Matrix, Matrix]:
        sigma_r = symmetrize(Axy @ P @ Axy.T + Sxx)
        try:
            factor = scipy.linalg.cho_factor(sigma_r)
        except np.linalg.LinAlgError as err:
            raise SingularInnovations("reduced innovations covariance is singular") from err
        cross = Ayy @ P @ Axy.T + Syx
        gain = scipy.linalg.cho_solve(factor, cross.T).T
        P_next = symmetrize(Ayy @ P @ Ayy.T + Syy - gain @ cross.T)
        return P_next, sigma_r, gain

    if not np.any(Axy):
        sigma_r = Sxx.copy()
        gain = scipy.linalg.cho_solve(sxx_factor, Syx.T).T
        return P, sigma_r, gain

    tiny = np.finfo(float).tiny
    for iteration in range(1, max_iter + 1):
        P_next, sigma_r, gain = riccati_step(P)
        change = np.max(np.abs(P_next - P))
        P = P_next
        if change <= tol * max(np.max(np.abs(P)), np.max(np.abs(Syy)), tiny):
            break
    else:
        raise NonConvergent(f"DARE did not converge in {max_iter} iterations")

    P_check, sigma_r, gain = riccati_step(P)
    residual = np.max(np.abs(P_check - P))
    scale = max(np.max(np.abs(P)), np.max(np.abs(Syy)), tiny)
    if residual > RTOL * scale:
        raise NonConvergent(f"DARE residual {residual:.3g} exceeds tolerance")
    logger.debug(
        "dare converged", iterations=iteration, dim=m, residual=float(residual)
    )
    return P, sigma_r, gain
