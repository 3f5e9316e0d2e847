"""Linear state feedback u = -K x for one plane.

The default design is an LQR gain obtained from the continuous algebraic
Riccati equation, solved by Kleinman-Newton iteration from a stabilising
pole-placement gain.  Pole placement (Ackermann) is also exposed directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import LinearModel
from .errors import NotControllable, NotStabilizable


@dataclass(frozen=True)
class GainVector:
    k: tuple

    def __post_init__(self):
        k = tuple(float(v) for v in np.asarray(self.k, dtype=float).reshape(-1))
        if not all(np.isfinite(k)):
            raise ValueError("gain entries must be finite")
        object.__setattr__(self, "k", k)

    def as_array(self) -> np.ndarray:
        return np.array(self.k)

    def closed_loop_eigs(self, model: LinearModel) -> np.ndarray:
        return np.linalg.eigvals(model.a - model.b @ self.as_array()[None, :])


@dataclass(frozen=True)
class LqrWeights:
    q_diag: tuple = (1.0, 100.0, 1.0, 10.0)
    r: float = 1000.0

    def __post_init__(self):
        q = tuple(float(v) for v in self.q_diag)
        object.__setattr__(self, "q_diag", q)
        if any(v < 0 for v in q) or not any(v > 0 for v in q):
            raise ValueError("q_diag must be nonnegative with at least one positive entry")
        if not self.r > 0:
            raise ValueError("r must be positive")


def controllability_matrix(a, b) -> np.ndarray:
    n = a.shape[0]
    cols = [b]
    for _ in range(n - 1):
        cols.append(a @ cols[-1])
    return np.hstack(cols)


def _check_controllable(a, b):
    ctrb = controllability_matrix(a, b)
    if np.linalg.matrix_rank(ctrb) < a.shape[0]:
        raise NotControllable("(A, B) is not controllable")
    return ctrb


def ackermann(a, b, poles) -> np.ndarray:
    """Single-input pole placement, returns the gain row k with eig(A - b k) = poles."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1, 1)
    n = a.shape[0]
    poles = np.asarray(poles, dtype=complex).reshape(-1)
    if poles.size != n:
        raise ValueError(f"need {n} poles, got {poles.size}")
    if not np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj()), rtol=0, atol=1e-12):
        raise ValueError("poles must be closed under complex conjugation")
    ctrb = _check_controllable(a, b)
    coeffs = np.real_if_close(np.poly(poles), tol=1e6).real
    phi = np.zeros_like(a)
    for c in coeffs:
        phi = phi @ a + c * np.eye(n)
    last = np.zeros(n)
    last[-1] = 1.0
    return np.linalg.solve(ctrb.T, last) @ phi


def solve_lyapunov(a, q) -> np.ndarray:
    """Solve A^T P + P A + Q = 0 by a Kronecker-product linear system."""
    n = a.shape[0]
    eye = np.eye(n)
    op = np.kron(eye, a.T) + np.kron(a.T, eye)
    p = np.linalg.solve(op, -q.reshape(-1, order="F")).reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def care_residual(a, b, q, r, p) -> np.ndarray:
    rinv = np.linalg.inv(np.atleast_2d(r))
    return a.T @ p + p @ a - p @ b @ rinv @ b.T @ p + q


def _initial_gain(a, b):
    eig = np.linalg.eigvals(a)
    # reflect and shift open-loop poles into the left half plane
    poles = -(np.abs(eig.real) + 1.0) + 1j * eig.imag
    return np.atleast_2d(ackermann(a, b, poles))


def solve_care(a, b, q, r, max_iter=100, tol=1e-12):
    """Stabilising CARE solution by Kleinman-Newton iteration.

    Returns ``(P, K, iterations)``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    if b.shape[1] != 1:
        raise ValueError("only single-input systems are supported")
    _check_controllable(a, b)
    rinv = np.linalg.inv(r)
    k = _initial_gain(a, b)
    p_prev = None
    for it in range(1, max_iter + 1):
        acl = a - b @ k
        if np.max(np.linalg.eigvals(acl).real) >= 0:
            raise NotStabilizable(f"iterate {it} lost closed-loop stability")
        p = solve_lyapunov(acl, q + k.T @ r @ k)
        k = rinv @ b.T @ p
        scale = max(1.0, np.linalg.norm(p))
        # the Lyapunov solve floors the step size near 1e-11, so test the residual too
        if np.linalg.norm(care_residual(a, b, q, r, p)) <= tol * scale:
            break
        if p_prev is not None and np.linalg.norm(p - p_prev) <= tol * scale:
            break
        p_prev = p
    else:
        raise NotStabilizable("Kleinman iteration did not converge")
    res = care_residual(a, b, q, r, p)
    if np.linalg.norm(res) >= 1e-8 * max(np.linalg.norm(p), 1.0):
        raise NotStabilizable(f"CARE residual {np.linalg.norm(res):.3g} too large")
    return p, k, it


def design_lqr(model: LinearModel, w: LqrWeights) -> GainVector:
    q = np.diag(w.q_diag)
    if q.shape[0] != model.a.shape[0]:
        raise ValueError("q_diag length does not match the state dimension")
    _, k, _ = solve_care(model.a, model.b, q, [[w.r]])
    gain = GainVector(k[0])
    if np.max(gain.closed_loop_eigs(model).real) >= -1e-6:
        raise NotStabilizable("LQR closed loop is not stable")
    return gain


def design_pole_placement(model: LinearModel, poles) -> GainVector:
    return GainVector(ackermann(model.a, model.b, poles))


def feedback_torque(k: GainVector, x) -> float:
    """u = -k . x; also accepts a stack of states in the last axis."""
    return -(np.asarray(x, dtype=float) @ k.as_array())
