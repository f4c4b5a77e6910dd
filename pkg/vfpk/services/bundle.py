"""
Dense linearized operators at small resolution, in the twisted Gram geometry.

Unknowns are the Hermite coefficients a_n of f on the staggered layout of
vfpk.services.macro: even rows on the nodes, odd rows on the midpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, null_space, solve

from vfpk.core.errors import GramError, GridError
from vfpk.core.logging import get_logger, log_fields
from vfpk.models.kernels import KernelSplit
from vfpk.services.macro import MacroGeometry
from vfpk.services.steady import SteadyState

logger = get_logger(__name__)

MAX_DENSE_UNKNOWNS = 8192


def _matrix_of(fn: Callable[[np.ndarray], np.ndarray], n_in: int) -> np.ndarray:
    return np.stack([fn(column) for column in np.eye(n_in)], axis=1)


@dataclass(frozen=True, eq=False)
class OperatorBundle:
    """Dense operators in the twisted Gram geometry; lambda_op is the full linearized generator T - L."""

    lambda_op: np.ndarray
    T: np.ndarray
    L: np.ndarray
    Pi: np.ndarray
    A: np.ndarray
    gram: np.ndarray
    offsets: List[int]
    nu: float
    node_measure: np.ndarray

    @property
    def size(self) -> int:
        return self.gram.shape[0]

    def adjoint(self, X: np.ndarray) -> np.ndarray:
        """X^dagger = G^{-1} X^T G."""
        return solve(self.gram, X.T @ self.gram, assume_a="pos")

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(x @ self.gram @ x))

    def operator_norm(self, X: np.ndarray) -> float:
        """Operator norm of X in the twisted norm, from the pencil (X^T G X, G)."""
        top = eigh(X.T @ self.gram @ X, self.gram, eigvals_only=True, subset_by_index=[self.size - 1, self.size - 1])
        return float(np.sqrt(max(top[0], 0.0)))

    def identity_report(self) -> Dict[str, float]:
        scale_T = max(np.abs(self.T).max(), 1.0)
        scale_L = max(np.abs(self.L).max(), 1.0)
        report = {
            "skew_T": float(np.abs(self.T + self.adjoint(self.T)).max() / scale_T),
            "symmetric_L": float(np.abs(self.L - self.adjoint(self.L)).max() / scale_L),
            "pi_t_pi": float(np.abs(self.Pi @ self.T @ self.Pi).max() / scale_T),
            "dissipation_lambda": float(
                np.abs(self.lambda_op + self.adjoint(self.lambda_op) + 2.0 * self.L).max() / max(scale_T, scale_L)
            ),
            "pi_self_adjoint": float(np.abs(self.Pi - self.adjoint(self.Pi)).max()),
            "norm_A": self.operator_norm(self.A),
            "norm_AL": self.operator_norm(self.A @ self.L),
            "norm_TA": self.operator_norm(self.T @ self.A),
            "nu": self.nu,
        }
        logger.info("operator identities", extra=log_fields(**report))
        return report


def assemble_discrete_operators(
    steady: SteadyState,
    k_split: Optional[KernelSplit],
    n_modes: int,
    nu: float = 1.0,
) -> OperatorBundle:
    geometry = MacroGeometry.from_steady(steady, k_split)
    n_x = geometry.size
    sizes = [n_x if m % 2 == 0 else n_x - 1 for m in range(n_modes)]
    total = int(sum(sizes))
    if n_modes * n_x > MAX_DENSE_UNKNOWNS:
        raise GridError("dense assembly is limited to N_x * N_v <= 8192", n_x=n_x, n_modes=n_modes)
    offsets = list(np.cumsum([0] + sizes[:-1]))

    def block(m: int) -> slice:
        return slice(offsets[m], offsets[m] + sizes[m])

    D = _matrix_of(geometry.d, n_x)
    D_star = _matrix_of(geometry.d_star, n_x - 1)
    E = _matrix_of(geometry.e, n_x)
    E_star = _matrix_of(geometry.e_star, n_x - 1)
    K_tilde = _matrix_of(geometry.k_tilde, n_x)

    T = np.zeros((total, total))
    for m in range(1, n_modes):
        root = np.sqrt(m)
        if (m - 1) % 2 == 0:
            up, down = D, D_star
        else:
            up, down = E_star, E
        T[block(m), block(m - 1)] = root * up
        T[block(m - 1), block(m)] = -root * down
    if n_modes > 1:
        T[block(1), block(0)] += D @ K_tilde

    L = np.zeros((total, total))
    for m in range(n_modes):
        L[block(m), block(m)] = -nu * m * np.eye(sizes[m])

    Pi = np.zeros((total, total))
    Pi[block(0), block(0)] = np.eye(n_x)

    gram = np.zeros((total, total))
    for m in range(n_modes):
        measure = geometry.node_measure if m % 2 == 0 else geometry.mid_measure
        gram[block(m), block(m)] = np.diag(measure)
    gram[block(0), block(0)] += np.diag(geometry.node_measure) @ K_tilde
    gram = 0.5 * (gram + gram.T)
    try:
        cholesky(gram, lower=True)
    except LinAlgError as e:
        raise GramError("twisted Gram matrix is not positive definite; coercivity smallness fails") from e

    T_pi = T @ Pi
    T_pi_adj = solve(gram, T_pi.T @ gram, assume_a="pos")
    A = solve(np.eye(total) + T_pi_adj @ T_pi, T_pi_adj)
    bundle = OperatorBundle(
        lambda_op=T - L,
        T=T,
        L=L,
        Pi=Pi,
        A=A,
        gram=gram,
        offsets=offsets,
        nu=nu,
        node_measure=geometry.node_measure,
    )
    logger.debug("dense bundle assembled", extra=log_fields(unknowns=total, n_x=n_x, n_modes=n_modes))
    return bundle


def macroscopic_coercivity_constant(bundle: OperatorBundle) -> float:
    """lambda_M: smallest |||T Pi z||| / |||z||| over mean-zero density rows z."""
    n_x = bundle.offsets[1] if len(bundle.offsets) > 1 else bundle.size
    rows = slice(0, n_x)
    gram_00 = bundle.gram[rows, rows]
    T_pi = bundle.T[:, rows]
    stiffness = T_pi.T @ bundle.gram @ T_pi
    # mean-zero: orthogonal to constants in the rho_star-weighted product
    P = null_space(bundle.node_measure[None, :])
    lowest = eigh(P.T @ stiffness @ P, P.T @ gram_00 @ P, eigvals_only=True, subset_by_index=[0, 0])
    value = float(np.sqrt(max(lowest[0], 0.0)))
    logger.info("macroscopic coercivity", extra=log_fields(lambda_m=value))
    return value
