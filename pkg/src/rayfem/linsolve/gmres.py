"""Restarted GMRES with left preconditioning and modified Gram-Schmidt."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["KrylovConfig", "GMRESResult", "gmres_solve"]


@dataclass(frozen=True)
class KrylovConfig:
    tol: float = 1e-7
    restart: int = 40
    maxiter: int = 400

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if self.restart < 1 or self.maxiter < 1:
            raise ValueError("restart and maxiter must be >= 1")


@dataclass
class GMRESResult:
    x: np.ndarray
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = False


def _identity(v):
    return v


def gmres_solve(apply_A, b, apply_M=None, config=KrylovConfig(), x0=None):
    """Solve ``A x = b`` by GMRES on ``M A x = M b``.

    ``history`` holds the relative preconditioned residual after every inner
    step (first entry: the initial residual). On failure the best iterate is
    returned with ``converged=False``.
    """
    M = apply_M or _identity
    b = np.asarray(b, dtype=complex)
    n = b.size
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    mb = M(b)
    bnorm = np.linalg.norm(mb)
    if bnorm == 0:
        return GMRESResult(np.zeros(n, dtype=complex), 0, [0.0], True)
    r = M(b - apply_A(x)) if np.any(x) else mb
    beta = np.linalg.norm(r)
    history = [beta / bnorm]
    if history[-1] <= config.tol:
        return GMRESResult(x, 0, history, True)
    its = 0
    m = config.restart
    while its < config.maxiter:
        V = np.zeros((m + 1, n), dtype=complex)
        Hs = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m, dtype=complex)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        V[0] = r / beta
        g[0] = beta
        k = 0
        done = False
        while k < m and its < config.maxiter:
            w = M(apply_A(V[k]))
            for i in range(k + 1):
                Hs[i, k] = np.vdot(V[i], w)
                w = w - Hs[i, k] * V[i]
            Hs[k + 1, k] = np.linalg.norm(w)
            if Hs[k + 1, k] != 0:
                V[k + 1] = w / Hs[k + 1, k]
            for i in range(k):
                t = cs[i] * Hs[i, k] + sn[i] * Hs[i + 1, k]
                Hs[i + 1, k] = -np.conj(sn[i]) * Hs[i, k] + cs[i] * Hs[i + 1, k]
                Hs[i, k] = t
            a, c = Hs[k, k], Hs[k + 1, k]
            den = np.hypot(abs(a), abs(c))
            cs[k] = abs(a) / den if den else 1.0
            sn[k] = (a / abs(a)) * np.conj(c) / den if abs(a) else 1.0
            Hs[k, k] = cs[k] * a + sn[k] * c
            Hs[k + 1, k] = 0.0
            g[k + 1] = -np.conj(sn[k]) * g[k]
            g[k] = cs[k] * g[k]
            k += 1
            its += 1
            history.append(abs(g[k]) / bnorm)
            if history[-1] <= config.tol or Hs[k - 1, k - 1] == 0:
                done = True
                break
        y = np.linalg.solve(np.triu(Hs[:k, :k]), g[:k]) if k else np.zeros(0)
        x = x + V[:k].T @ y
        if done and history[-1] <= config.tol:
            return GMRESResult(x, its, history, True)
        r = M(b - apply_A(x))
        beta = np.linalg.norm(r)
        if beta / bnorm <= config.tol:
            return GMRESResult(x, its, history, True)
        if done:
            break
    return GMRESResult(x, its, history, False)
