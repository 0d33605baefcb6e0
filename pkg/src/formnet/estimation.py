"""Position estimation from noisy relative measurements on graph edges.

Measurements are stacked edge-major: row block ``k`` (``d`` entries) holds
``z_k = x_tail - x_head + noise``. The scalar incidence matrix ``H`` is lifted
to ``kron(H, I_d)`` so that it acts on agent-major stacked positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

COND_LIMIT = 1e12


class EstimationError(ValueError):
    pass


class RankDeficient(EstimationError):
    """Non-reference columns of the incidence matrix are not independent."""


@dataclass(frozen=True)
class MeasurementSet:
    values: np.ndarray  # (m, d)
    cov: np.ndarray  # (m*d, m*d)

    def __post_init__(self):
        z = np.asarray(self.values, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        P = np.atleast_2d(np.asarray(self.cov, dtype=float))
        md = z.shape[0] * z.shape[1]
        if P.shape != (md, md):
            raise EstimationError(f"covariance must be {md}x{md}, got {P.shape}")
        if not np.allclose(P, P.T, atol=1e-12, rtol=0):
            raise EstimationError("measurement covariance is not symmetric")
        object.__setattr__(self, "values", z)
        object.__setattr__(self, "cov", P)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @classmethod
    def isotropic(cls, values, variances) -> "MeasurementSet":
        """Block-diagonal covariance, ``variances[k] * I_d`` for edge ``k``."""
        z = np.asarray(values, dtype=float)
        if z.ndim == 1:
            z = z[:, None]
        var = np.broadcast_to(np.asarray(variances, dtype=float), (z.shape[0],))
        return cls(z, np.diag(np.repeat(var, z.shape[1])))


@dataclass(frozen=True)
class Estimate:
    positions: np.ndarray  # (n, d)
    covariance: np.ndarray
    reference: int | None = None
    epoch: int = 0


@dataclass(frozen=True)
class PartitionedIncidence:
    H_b: np.ndarray
    H_r: np.ndarray
    reference: int

    @property
    def others(self) -> list[int]:
        n = self.H_b.shape[1] + 1
        return [i for i in range(n) if i != self.reference]


def _lift(H, d):
    return np.kron(H, np.eye(d))


def _cho(P):
    try:
        return scipy.linalg.cho_factor(P)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("measurement covariance is not positive definite") from exc


def _check_rows(H, Z: MeasurementSet):
    if H.shape[0] != Z.m:
        raise EstimationError(f"incidence has {H.shape[0]} rows but there are {Z.m} measurements")


def ls_estimate(H, Z: MeasurementSet) -> Estimate:
    """Minimum-norm least-squares positions; ``H^T H`` is singular, so this is the pseudoinverse solution."""
    H = np.asarray(H, dtype=float)
    _check_rows(H, Z)
    n, d = H.shape[1], Z.d
    A = _lift(H, d)
    A_pinv = np.linalg.pinv(A)
    x = A_pinv @ Z.values.reshape(-1)
    return Estimate(x.reshape(n, d), A_pinv @ A_pinv.T)


def blue_estimate(H, Z: MeasurementSet) -> Estimate:
    """Minimum-norm solution of the ``P^-1``-weighted normal equations."""
    H = np.asarray(H, dtype=float)
    _check_rows(H, Z)
    n, d = H.shape[1], Z.d
    c, lower = _cho(Z.cov)
    L = np.tril(c) if lower else np.triu(c).T
    # whiten with the Cholesky factor: P = L L^T
    A_w = scipy.linalg.solve_triangular(L, _lift(H, d), lower=True)
    z_w = scipy.linalg.solve_triangular(L, Z.values.reshape(-1), lower=True)
    A_pinv = np.linalg.pinv(A_w)
    x = A_pinv @ z_w
    return Estimate(x.reshape(n, d), A_pinv @ A_pinv.T)


def partition_incidence(H, reference: int) -> PartitionedIncidence:
    H = np.asarray(H, dtype=float)
    if not 0 <= reference < H.shape[1]:
        raise EstimationError(f"reference {reference} out of range")
    keep = [i for i in range(H.shape[1]) if i != reference]
    return PartitionedIncidence(H[:, keep], H[:, [reference]], reference)


def anchored_blue(part: PartitionedIncidence, x_r, Z: MeasurementSet) -> Estimate:
    """BLUE of the non-reference positions given the reference position ``x_r``.

    ``x_b = (H_b^T P^-1 H_b)^-1 H_b^T P^-1 (z - H_r x_r)`` with covariance
    ``(H_b^T P^-1 H_b)^-1``. Raises RankDeficient when some agent is not
    connected to the reference through the measured edges.
    """
    _check_rows(part.H_b, Z)
    d = Z.d
    x_r = np.asarray(x_r, dtype=float).reshape(d)
    A_b = _lift(part.H_b, d)
    A_r = _lift(part.H_r, d)
    y = Z.values.reshape(-1) - A_r @ x_r

    P_fac = _cho(Z.cov)
    W_A = scipy.linalg.cho_solve(P_fac, A_b)
    N = A_b.T @ W_A
    N = 0.5 * (N + N.T)
    if N.size:
        try:
            N_fac = scipy.linalg.cho_factor(N)
        except np.linalg.LinAlgError as exc:
            raise RankDeficient("measurements do not connect every agent to the reference") from exc
        scale = 1.0 / np.sqrt(np.diag(N))
        if np.linalg.cond(N * np.outer(scale, scale)) > COND_LIMIT:
            raise RankDeficient("normal matrix is numerically singular")
        rhs = W_A.T @ y
        x_b = scipy.linalg.cho_solve(N_fac, rhs)
        x_b += scipy.linalg.cho_solve(N_fac, rhs - N @ x_b)  # one refinement step
        eye = np.eye(N.shape[0])
        cov = scipy.linalg.cho_solve(N_fac, eye)
        cov += scipy.linalg.cho_solve(N_fac, eye - N @ cov)
        cov = 0.5 * (cov + cov.T)
    else:
        x_b = np.zeros(0)
        cov = np.zeros((0, 0))

    n = part.H_b.shape[1] + 1
    pos = np.empty((n, d))
    pos[part.others] = x_b.reshape(-1, d)
    pos[part.reference] = x_r
    return Estimate(pos, cov, reference=part.reference)


def link_variance(est: Estimate, i: int, j: int) -> float:
    """Per-coordinate variance of ``x_i - x_j`` under an anchored estimate's covariance."""
    d = est.positions.shape[1]
    others = [k for k in range(est.positions.shape[0]) if k != est.reference]
    slot = {a: s for s, a in enumerate(others)}
    a = np.zeros(est.covariance.shape[0])
    total = 0.0
    for c in range(d):
        a[:] = 0.0
        if i in slot:
            a[slot[i] * d + c] += 1.0
        if j in slot:
            a[slot[j] * d + c] -= 1.0
        total += a @ est.covariance @ a
    return total / d
