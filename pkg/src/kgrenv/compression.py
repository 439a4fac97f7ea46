"""Multi-scale attention compression and a performance-gap bound verifier.

The compressor maps an n x d embedding matrix to k_eff x d through L
attention scales plus pairwise cross-scale interactions. The verifier side
builds exactly solvable tabular decision processes, evaluates the compressed
and uncompressed softmax-linear policies in closed form, and checks the
degradation bound with constants taken as true sups over the finite space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BoundReport",
    "CompressionLoss",
    "CompressionParams",
    "TabularMDP",
    "bound_check",
    "compression_loss",
    "exact_value",
    "multiscale_compress",
    "reports_jsonl",
    "seeded_mdp",
]

_PAIR_TOL = 1e-12


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class CompressionParams:
    """Per-scale attention weights plus mixing and cross-scale parameters.

    Q[i]: k_i x d queries, WK[i]/WV[i]: d x d key/value projections,
    M[i]: k_i x n bias, P[i]: k_i x k_i row mixer used before padding each
    scale to k_eff rows. omega lives on the simplex; xi is upper-triangular
    nonnegative. W_cross maps the 3d-wide concatenation back to d.
    """

    n: int
    d: int
    L: int
    ks: tuple[int, ...]
    Q: tuple[np.ndarray, ...]
    WK: tuple[np.ndarray, ...]
    WV: tuple[np.ndarray, ...]
    M: tuple[np.ndarray, ...]
    P: tuple[np.ndarray, ...]
    omega: np.ndarray
    xi: np.ndarray
    W_cross: np.ndarray
    b_cross: np.ndarray

    def __post_init__(self) -> None:
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.d % self.L != 0:
            raise ValueError("d must be divisible by L")
        if len(self.ks) != self.L or any(k < 1 for k in self.ks):
            raise ValueError("ks must hold L positive scale sizes")
        for name in ("Q", "WK", "WV", "M", "P"):
            if len(getattr(self, name)) != self.L:
                raise ValueError(f"{name} must hold L arrays")
        for i, k in enumerate(self.ks):
            if self.Q[i].shape != (k, self.d):
                raise ValueError(f"Q[{i}] must be {k}x{self.d}")
            if self.WK[i].shape != (self.d, self.d):
                raise ValueError(f"WK[{i}] must be {self.d}x{self.d}")
            if self.WV[i].shape != (self.d, self.d):
                raise ValueError(f"WV[{i}] must be {self.d}x{self.d}")
            if self.M[i].shape != (k, self.n):
                raise ValueError(f"M[{i}] must be {k}x{self.n}")
            if self.P[i].shape != (k, k):
                raise ValueError(f"P[{i}] must be {k}x{k}")
        if self.omega.shape != (self.L,):
            raise ValueError("omega must have one weight per scale")
        if np.any(self.omega < 0) or abs(float(self.omega.sum()) - 1.0) > 1e-9:
            raise ValueError("omega must be nonnegative and sum to 1")
        if self.xi.shape != (self.L, self.L):
            raise ValueError("xi must be LxL")
        if np.any(self.xi < 0):
            raise ValueError("xi must be nonnegative")
        if self.W_cross.shape != (3 * self.d, self.d):
            raise ValueError(f"W_cross must be {3 * self.d}x{self.d}")
        if self.b_cross.shape != (self.d,):
            raise ValueError(f"b_cross must have length {self.d}")

    @property
    def k_eff(self) -> int:
        return max(self.ks)

    @classmethod
    def seeded(
        cls, n: int, d: int, L: int, ks: Sequence[int], seed: int
    ) -> "CompressionParams":
        if L < 1:
            raise ValueError("L must be >= 1")
        rng = np.random.default_rng(seed)
        s = 1.0 / math.sqrt(d)
        ks = tuple(int(k) for k in ks)
        xi = np.triu(rng.random((L, L)), k=1) * 0.5
        return cls(
            n=n,
            d=d,
            L=L,
            ks=ks,
            Q=tuple(rng.normal(size=(k, d)) * s for k in ks),
            WK=tuple(rng.normal(size=(d, d)) * s for _ in ks),
            WV=tuple(rng.normal(size=(d, d)) * s for _ in ks),
            M=tuple(rng.normal(size=(k, n)) * s for k in ks),
            P=tuple(rng.normal(size=(k, k)) / math.sqrt(k) for k in ks),
            omega=np.full(L, 1.0 / L),
            xi=xi,
            W_cross=rng.normal(size=(3 * d, d)) * s,
            b_cross=np.zeros(d),
        )


def _pad_rows(x: np.ndarray, rows: int) -> np.ndarray:
    if x.shape[0] == rows:
        return x
    out = np.zeros((rows, x.shape[1]))
    out[: x.shape[0]] = x
    return out


def multiscale_compress(H: np.ndarray, p: CompressionParams) -> np.ndarray:
    """Z = sum_i omega_i phi_i + sum_{i<j} xi_ij CrossScale(phi_i, phi_j).

    phi_i = softmax(Q_i (H WK_i)^T / sqrt(d/L) + M_i) (H WV_i); scales are
    padded with zero rows to k_eff after the P_i row mix; the cross term is
    tanh([X*Y; X; Y] W_cross + b_cross) over the padded projections.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (p.n, p.d):
        raise ValueError(f"H must be {p.n}x{p.d}")
    scale = math.sqrt(p.d / p.L)
    phis = []
    for i in range(p.L):
        K = H @ p.WK[i]
        V = H @ p.WV[i]
        att = _softmax_rows(p.Q[i] @ K.T / scale + p.M[i])
        phis.append(att @ V)
    k_eff = p.k_eff
    Z = np.zeros((k_eff, p.d))
    for i in range(p.L):
        Z += p.omega[i] * _pad_rows(phis[i], k_eff)
    for i in range(p.L - 1):
        for j in range(i + 1, p.L):
            w = float(p.xi[i, j])
            if w == 0.0:
                continue
            X = _pad_rows(p.P[i] @ phis[i], k_eff)
            Y = _pad_rows(p.P[j] @ phis[j], k_eff)
            cat = np.concatenate([X * Y, X, Y], axis=1)
            Z += w * np.tanh(cat @ p.W_cross + p.b_cross)
    return Z


@dataclass(frozen=True)
class CompressionLoss:
    rec: float
    task: float
    total: float
    mi_status: str = "omitted"

    def to_dict(self) -> dict:
        return {
            "rec": self.rec,
            "task": self.task,
            "total": self.total,
            "mi_status": self.mi_status,
        }


def compression_loss(
    H: np.ndarray,
    p: CompressionParams,
    decoder: Callable[[np.ndarray], np.ndarray],
    task_fn: Callable[[np.ndarray], float],
    lambda_rec: float = 1.0,
    lambda_task: float = 1.0,
) -> CompressionLoss:
    """Squared-Frobenius reconstruction plus a caller-supplied task term.

    The information-retention term has no estimator here; mi_status says so
    explicitly on every result.
    """
    H = np.asarray(H, dtype=np.float64)
    Z = multiscale_compress(H, p)
    diff = H - np.asarray(decoder(Z), dtype=np.float64)
    rec = float(np.sum(diff * diff))
    task = float(task_fn(Z))
    total = lambda_rec * rec + lambda_task * task
    return CompressionLoss(rec=rec, task=task, total=float(total))


@dataclass
class TabularMDP:
    """Finite decision process with linear rewards over observations.

    P[s, a, s'] transition kernel, H[s] the observation row, r(s) = w_r . H[s].
    Phi/Psi are the linear compression/reconstruction maps and W the shared
    softmax-linear policy head applied to raw or reconstructed observations.
    """

    P: np.ndarray
    H: np.ndarray
    w_r: np.ndarray
    gamma: float
    Phi: np.ndarray
    Psi: np.ndarray
    W: np.ndarray

    def __post_init__(self) -> None:
        self.P = np.asarray(self.P, dtype=np.float64)
        self.H = np.asarray(self.H, dtype=np.float64)
        self.w_r = np.asarray(self.w_r, dtype=np.float64)
        self.Phi = np.asarray(self.Phi, dtype=np.float64)
        self.Psi = np.asarray(self.Psi, dtype=np.float64)
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError("P must be S x A x S")
        S, A, _ = self.P.shape
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > 1e-9:
            raise ValueError("transition rows must be distributions")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.H.shape[0] != S:
            raise ValueError("H must have one row per state")
        d = self.H.shape[1]
        if self.w_r.shape != (d,):
            raise ValueError("w_r must match the observation width")
        m = self.Phi.shape[1]
        if self.Phi.shape != (d, m) or self.Psi.shape != (m, d):
            raise ValueError("Phi and Psi must be d x m and m x d")
        if self.W.shape != (d, A):
            raise ValueError("W must be d x A")

    @property
    def S(self) -> int:
        return self.P.shape[0]

    @property
    def A(self) -> int:
        return self.P.shape[1]

    @property
    def rewards(self) -> np.ndarray:
        return self.H @ self.w_r

    def reconstructed(self) -> np.ndarray:
        return self.H @ self.Phi @ self.Psi

    def policy_H(self) -> np.ndarray:
        return _softmax_rows(self.H @ self.W)

    def policy_Z(self) -> np.ndarray:
        return _softmax_rows(self.reconstructed() @ self.W)


def exact_value(mdp: TabularMDP, policy: np.ndarray) -> float:
    """Closed-form J under a uniform start: mean of (I - gamma P_pi)^-1 r."""
    policy = np.asarray(policy, dtype=np.float64)
    if policy.shape != (mdp.S, mdp.A):
        raise ValueError("policy must be S x A")
    if np.any(policy < 0) or np.max(np.abs(policy.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("policy rows must be distributions")
    if not mdp.gamma < 1.0:
        raise ValueError("discount must be below 1 for a solvable system")
    P_pi = np.einsum("sa,sat->st", policy, mdp.P)
    V = np.linalg.solve(np.eye(mdp.S) - mdp.gamma * P_pi, mdp.rewards)
    return float(V.mean())


@dataclass(frozen=True)
class BoundReport:
    J_H: float
    J_Z: float
    eps_obs: float
    eps_pi: float
    L_R: float
    L_Q: float
    sigma_pi: float
    Q_max: float
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self) -> dict:
        return {
            "J_H": self.J_H,
            "J_Z": self.J_Z,
            "eps_obs": self.eps_obs,
            "eps_pi": self.eps_pi,
            "L_R": self.L_R,
            "L_Q": self.L_Q,
            "sigma_pi": self.sigma_pi,
            "Q_max": self.Q_max,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": self.holds,
        }


def _lipschitz_sup(points: np.ndarray, values: np.ndarray, norm) -> float:
    """Max difference quotient over point pairs; identical points skipped."""
    best = 0.0
    n = points.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            dx = float(np.linalg.norm(points[i] - points[j]))
            if dx <= _PAIR_TOL:
                continue
            best = max(best, norm(values[i], values[j]) / dx)
    return best


def bound_check(mdp: TabularMDP, tol: float = 1e-9) -> BoundReport:
    """Measure both sides of the degradation bound on one finite instance.

    lhs = |J(pi_Z) - J(pi_H)| from two exact evaluations. eps_obs is the mean
    reconstruction error, eps_pi the mean KL(pi_Z || pi_H). L_R = ||w_r||;
    Q_max = max |r| / (1 - gamma); L_Q and sigma_pi are exact sups of the
    respective difference quotients over the finite space (pairs with
    identical observations are skipped).
    """
    pi_H = mdp.policy_H()
    pi_Z = mdp.policy_Z()
    J_H = exact_value(mdp, pi_H)
    J_Z = exact_value(mdp, pi_Z)
    lhs = abs(J_Z - J_H)

    R = mdp.reconstructed()
    eps_obs = float(np.mean(np.linalg.norm(mdp.H - R, axis=1)))
    eps_pi = float(np.mean(np.sum(pi_Z * np.log(pi_Z / pi_H), axis=1)))

    r = mdp.rewards
    gamma = mdp.gamma
    L_R = float(np.linalg.norm(mdp.w_r))
    Q_max = float(np.max(np.abs(r))) / (1.0 - gamma)

    P_pi = np.einsum("sa,sat->st", pi_H, mdp.P)
    V = np.linalg.solve(np.eye(mdp.S) - gamma * P_pi, r)
    Q = r[:, None] + gamma * np.einsum("sat,t->sa", mdp.P, V)
    L_Q = _lipschitz_sup(
        mdp.H, Q, lambda a, b: float(np.max(np.abs(a - b)))
    )
    # The policy head runs on raw and reconstructed observations alike, so the
    # sup ranges over every evaluated input point.
    points = np.vstack([mdp.H, R])
    dists = np.vstack([pi_H, pi_Z])
    sigma_pi = _lipschitz_sup(
        points, dists, lambda a, b: float(np.sum(np.abs(a - b)))
    )

    rhs = (
        L_R / (1.0 - gamma) * eps_obs
        + gamma * L_Q * sigma_pi / (1.0 - gamma) ** 2 * eps_obs
        + 2.0 * Q_max / (1.0 - gamma) * math.sqrt(0.5 * eps_pi)
    )
    return BoundReport(
        J_H=J_H,
        J_Z=J_Z,
        eps_obs=eps_obs,
        eps_pi=eps_pi,
        L_R=L_R,
        L_Q=L_Q,
        sigma_pi=sigma_pi,
        Q_max=Q_max,
        lhs=lhs,
        rhs=float(rhs),
        holds=bool(lhs <= rhs + tol),
    )


def seeded_mdp(
    seed: int, s_max: int = 20, a_max: int = 4, gamma_max: float = 0.95
) -> TabularMDP:
    """Random solvable instance with a lossy linear compression path."""
    rng = np.random.default_rng(seed)
    S = int(rng.integers(2, s_max + 1))
    A = int(rng.integers(2, a_max + 1))
    d = int(rng.integers(2, 7))
    m = int(rng.integers(1, d))
    P = rng.dirichlet(np.ones(S), size=(S, A))
    H = rng.normal(size=(S, d))
    return TabularMDP(
        P=P,
        H=H,
        w_r=rng.normal(size=d),
        gamma=float(0.5 + (gamma_max - 0.5) * rng.random()),
        Phi=rng.normal(size=(d, m)) / math.sqrt(d),
        Psi=rng.normal(size=(m, d)) / math.sqrt(m),
        W=rng.normal(size=(d, A)),
    )


def reports_jsonl(reports: Sequence[BoundReport]) -> str:
    return (
        "\n".join(
            json.dumps(r.to_dict(), sort_keys=True, separators=(",", ":"))
            for r in reports
        )
        + "\n"
    )
