"""Dense symmetric eigenvalues via cyclic Jacobi rotations."""

import logging

import numpy as np

from app.errors import InvalidArgumentError

logger = logging.getLogger("penaltynash.linalg")

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 100
JACOBI_SKIP = 1e-18


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def symmetric_eigenvalues(matrix, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> np.ndarray:
    """
    Eigenvalues of a real symmetric matrix, ascending.

    Args:
        matrix: square symmetric array
        tol: stop once the off-diagonal norm falls below tol * max(1, ||A||_F)
        max_sweeps: upper bound on full rotation sweeps

    Returns:
        Sorted 1-D array of eigenvalues
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError("matrix must be square", shape=a.shape)
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(a).max(initial=0.0)))):
        raise InvalidArgumentError("matrix must be symmetric")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    a = 0.5 * (a + a.T)

    threshold = tol * max(1.0, float(np.linalg.norm(a)))
    for sweep in range(max_sweeps):
        if _off_norm(a) <= threshold:
            logger.debug("Jacobi converged after %d sweeps", sweep)
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                # negligible against the diagonal; also keeps theta finite
                if abs(apq) <= JACOBI_SKIP * (abs(a[p, p]) + abs(a[q, q])) or apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q

                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
    else:
        if _off_norm(a) > threshold:
            logger.warning("Jacobi did not reach tolerance after %d sweeps (off=%.3e)", max_sweeps, _off_norm(a))

    return np.sort(np.diag(a))


def min_symmetric_eigenvalue(matrix) -> float:
    return float(symmetric_eigenvalues(matrix)[0])
