"""Vector-state models: matrix Riccati steps, Lyapunov covariance and the MIMO embedding.

Sensor ``i`` observes ``y_i = C_i x + v_i`` (``m``-vector, noise ``R_i``),
amplifies with an ``m x m`` matrix ``alpha_i`` and reaches the fusion
center through the ``m x m`` channel ``H_i`` with receiver noise ``N``.
The sum-power allocation problems over these matrices are non-convex; this
module evaluates them and offers a clearly non-optimal random-search
baseline, but does not solve them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import InstabilityError

LYAPUNOV_DIRECT_MAX = 20


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def spectral_radius(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(A)))))


def lyapunov_state_covariance(A, Q) -> np.ndarray:
    """Solve ``Sigma - A Sigma A^T = Q``.

    Small systems use the Kronecker-vectorised linear system; larger ones a
    doubling fixed-point iteration ``Sigma <- Sigma + A_k Sigma A_k^T``,
    ``A_k <- A_k^2``.
    """
    A, Q = np.atleast_2d(np.asarray(A, dtype=float)), np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if spectral_radius(A) >= 1.0:
        raise InstabilityError("spectral radius of A must be below 1")
    if n <= LYAPUNOV_DIRECT_MAX:
        K = np.eye(n * n) - np.kron(A, A)
        S = np.linalg.solve(K, Q.reshape(-1)).reshape(n, n)
        return _sym(S)
    S, Ak = Q.copy(), A.copy()
    for _ in range(200):
        inc = Ak @ S @ Ak.T
        S = S + inc
        Ak = Ak @ Ak
        if np.linalg.norm(inc) <= 1e-16 * np.linalg.norm(S):
            break
    return _sym(S)


def vector_transmit_power(alpha, C, Sigma, R) -> float:
    """``Tr(alpha (C Sigma C^T + R) alpha^T)``."""
    alpha, C = np.atleast_2d(alpha), np.atleast_2d(C)
    Sigma, R = np.atleast_2d(Sigma), np.atleast_2d(R)
    return float(np.trace(alpha @ (C @ Sigma @ C.T + R) @ alpha.T))


@dataclass(frozen=True)
class VectorSystem:
    A: np.ndarray
    Q: np.ndarray
    C: tuple
    R: tuple
    N: np.ndarray

    def __init__(self, A, Q, C: Sequence, R: Sequence, N):
        A, Q, N = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (A, Q, N))
        C = tuple(np.atleast_2d(np.asarray(c, dtype=float)) for c in C)
        R = tuple(np.atleast_2d(np.asarray(r, dtype=float)) for r in R)
        n, m = A.shape[0], N.shape[0]
        problems = []
        if A.shape != (n, n) or Q.shape != (n, n):
            problems.append("A and Q must be n x n")
        if len(C) != len(R) or not C:
            problems.append("need one (C_i, R_i) pair per sensor")
        for i, (c, r) in enumerate(zip(C, R)):
            if c.shape != (m, n) or r.shape != (m, m):
                problems.append(f"sensor {i}: C must be {m}x{n} and R {m}x{m}")
        if problems:
            raise ValueError("; ".join(problems))
        for name, val in (("A", A), ("Q", Q), ("C", C), ("R", R), ("N", N)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.N.shape[0]

    @property
    def M(self) -> int:
        return len(self.C)

    def state_covariance(self) -> np.ndarray:
        return lyapunov_state_covariance(self.A, self.Q)

    @classmethod
    def from_dict(cls, doc) -> "VectorSystem":
        """Nested row-major arrays: ``{A, Q, N, sensors: [{C, R}]}``."""
        allowed = {"A", "Q", "N", "sensors"}
        extra = set(doc) - allowed
        if extra:
            raise ValueError(f"unknown fields: {sorted(extra)}")
        return cls(doc["A"], doc["Q"], [s["C"] for s in doc["sensors"]], [s["R"] for s in doc["sensors"]], doc["N"])


def _step_mats(system: VectorSystem, H, alphas):
    H = [np.atleast_2d(np.asarray(h, dtype=float)) for h in H]
    alphas = [np.atleast_2d(np.asarray(a, dtype=float)) for a in alphas]
    if len(H) != system.M or len(alphas) != system.M:
        raise ValueError("need one channel and one amplification matrix per sensor")
    return H, alphas


def effective_mac(system: VectorSystem, H, alphas):
    """``(C_bar, R_bar)`` of the summed multi-access observation."""
    H, alphas = _step_mats(system, H, alphas)
    Cb = sum(h @ a @ c for h, a, c in zip(H, alphas, system.C))
    Rb = sum(h @ a @ r @ a.T @ h.T for h, a, r in zip(H, alphas, system.R)) + system.N
    return Cb, Rb


def vector_riccati_step_mac(P, system: VectorSystem, H, alphas, *, form: str = "joseph") -> np.ndarray:
    """Prior-to-prior covariance update for the multi-access scheme.

    ``form="joseph"`` (default) keeps the update PSD in floating point;
    ``"standard"`` is the textbook ``A P A^T - A P C^T (C P C^T + R)^-1 C P A^T + Q``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    Cb, Rb = effective_mac(system, H, alphas)
    S = Cb @ P @ Cb.T + Rb
    K = np.linalg.solve(S, Cb @ P).T
    if form == "joseph":
        I_KC = np.eye(system.n) - K @ Cb
        P_post = I_KC @ P @ I_KC.T + K @ Rb @ K.T
    elif form == "standard":
        P_post = P - K @ Cb @ P
    else:
        raise ValueError("form must be 'joseph' or 'standard'")
    return _sym(system.A @ P_post @ system.A.T + system.Q)


def orth_information(system: VectorSystem, H, alphas) -> np.ndarray:
    """``sum_i (H_i a_i C_i)^T (H_i a_i R_i a_i^T H_i^T + N)^-1 (H_i a_i C_i)`` blockwise."""
    H, alphas = _step_mats(system, H, alphas)
    J = np.zeros((system.n, system.n))
    for h, a, c, r in zip(H, alphas, system.C, system.R):
        G = h @ a @ c
        J += G.T @ np.linalg.solve(h @ a @ r @ a.T @ h.T + system.N, G)
    return _sym(J)


def vector_riccati_step_orth(P, system: VectorSystem, H, alphas) -> np.ndarray:
    """Orthogonal-scheme update through per-sensor information blocks."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    J = orth_information(system, H, alphas)
    P_post = np.linalg.solve(np.eye(system.n) + P @ J, P)
    return _sym(system.A @ P_post @ system.A.T + system.Q)


def vector_riccati_step_orth_stacked(P, system: VectorSystem, H, alphas) -> np.ndarray:
    """Naive stacked form with the full block-diagonal noise; reference only."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    H, alphas = _step_mats(system, H, alphas)
    Cs = np.vstack([h @ a @ c for h, a, c in zip(H, alphas, system.C)])
    m, M = system.m, system.M
    Rs = np.zeros((m * M, m * M))
    for i, (h, a, r) in enumerate(zip(H, alphas, system.R)):
        Rs[i * m:(i + 1) * m, i * m:(i + 1) * m] = h @ a @ r @ a.T @ h.T + system.N
    S = Cs @ P @ Cs.T + Rs
    P_post = P - P @ Cs.T @ np.linalg.solve(S, Cs @ P)
    return _sym(system.A @ P_post @ system.A.T + system.Q)


# -- MIMO embedding ---------------------------------------------------------------


@dataclass(frozen=True)
class MimoLayout:
    """Scalar-measurement sensors received on ``L`` antennas (orthogonal access).

    ``c`` is ``(M, n)``, ``h`` is ``(M, L)`` with ``h[i, j]`` the gain from
    sensor ``i`` to antenna ``j``; ``sigma_v2`` and ``alphas`` are length ``M``.
    """

    c: np.ndarray
    h: np.ndarray
    sigma_v2: np.ndarray
    alphas: np.ndarray
    sigma_n2: float

    def __init__(self, c, h, sigma_v2, alphas, sigma_n2):
        c = np.atleast_2d(np.asarray(c, dtype=float))
        h = np.atleast_2d(np.asarray(h, dtype=float))
        sv = np.atleast_1d(np.asarray(sigma_v2, dtype=float))
        al = np.atleast_1d(np.asarray(alphas, dtype=float))
        if not (c.shape[0] == h.shape[0] == len(sv) == len(al)):
            raise ValueError("c, h, sigma_v2 and alphas must agree on M")
        for name, val in (("c", c), ("h", h), ("sigma_v2", sv), ("alphas", al), ("sigma_n2", float(sigma_n2))):
            object.__setattr__(self, name, val)

    @property
    def M(self) -> int:
        return self.c.shape[0]

    @property
    def L(self) -> int:
        return self.h.shape[1]


class StackedObservation(NamedTuple):
    C: np.ndarray
    R: np.ndarray


def mimo_to_vector(layout: MimoLayout) -> StackedObservation:
    """Stack every (sensor, antenna) pair into one ``ML``-row observation.

    Rows are ordered sensor-major: ``h[i, j] alpha_i c_i`` for ``j = 1..L``
    within sensor ``i``.  A sensor's measurement noise reaches all its
    antennas, so the noise covariance has ``L x L`` blocks
    ``alpha_i^2 sigma_v2_i h_i h_i^T + sigma_n2 I``.
    """
    M, L = layout.M, layout.L
    g = layout.h * layout.alphas[:, None]
    C = (g[:, :, None] * layout.c[:, None, :]).reshape(M * L, -1)
    R = np.zeros((M * L, M * L))
    for i in range(M):
        R[i * L:(i + 1) * L, i * L:(i + 1) * L] = layout.sigma_v2[i] * np.outer(g[i], g[i]) + layout.sigma_n2 * np.eye(L)
    return StackedObservation(C, R)


def mimo_information(layout: MimoLayout) -> np.ndarray:
    """``C^T R^-1 C`` of the stacked observation, solved block by block."""
    M, L = layout.M, layout.L
    n = layout.c.shape[1]
    J = np.zeros((n, n))
    g = layout.h * layout.alphas[:, None]
    for i in range(M):
        Ci = np.outer(g[i], layout.c[i])
        Ri = layout.sigma_v2[i] * np.outer(g[i], g[i]) + layout.sigma_n2 * np.eye(L)
        J += Ci.T @ np.linalg.solve(Ri, Ci)
    return _sym(J)


def mimo_snr_terms(layout: MimoLayout) -> np.ndarray:
    """Per-sensor scalar SNR ``alpha^2 |h|^2 c^2 / (sigma_n2 + alpha^2 |h|^2 sigma_v2)`` (``n = 1``)."""
    g2 = layout.alphas**2 * np.sum(layout.h**2, axis=1)
    return g2 * layout.c[:, 0] ** 2 / (layout.sigma_n2 + g2 * layout.sigma_v2)


def stacked_riccati_step(P, A, Q, obs: StackedObservation) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    A, Q = np.atleast_2d(A), np.atleast_2d(Q)
    S = obs.C @ P @ obs.C.T + obs.R
    P_post = P - P @ obs.C.T @ np.linalg.solve(S, obs.C @ P)
    return _sym(A @ P_post @ A.T + Q)


# -- (P5)/(P6): evaluation only -----------------------------------------------------


class VectorEvaluation(NamedTuple):
    trace: float
    power: float
    feasible: bool


def evaluate_p5_p6(P, system: VectorSystem, H, alphas, gamma_total: float, scheme: str = "mac") -> VectorEvaluation:
    """``Tr(P_{k+1})``, total power and budget feasibility of given amplifications."""
    Sigma = system.state_covariance()
    power = sum(vector_transmit_power(a, c, Sigma, r) for a, c, r in zip(alphas, system.C, system.R))
    step = vector_riccati_step_mac if scheme == "mac" else vector_riccati_step_orth
    Pn = step(P, system, H, alphas)
    return VectorEvaluation(float(np.trace(Pn)), float(power), bool(power <= gamma_total * (1 + 1e-12)))


def random_search_baseline(P, system: VectorSystem, H, gamma_total: float, draws: int = 1000, seed=0,
                           scheme: str = "mac"):
    """Best of ``draws`` random amplifications scaled to spend the whole budget.

    A documentation baseline, not an optimiser.  Returns the best
    ``(alphas, VectorEvaluation)`` and every trace value drawn.
    """
    rng = np.random.default_rng(seed)
    Sigma = system.state_covariance()
    m = system.m
    best, traces = None, []
    for _ in range(draws):
        alphas = [rng.standard_normal((m, m)) for _ in range(system.M)]
        power = sum(vector_transmit_power(a, c, Sigma, r) for a, c, r in zip(alphas, system.C, system.R))
        alphas = [np.sqrt(gamma_total / power) * a for a in alphas]
        ev = evaluate_p5_p6(P, system, H, alphas, gamma_total, scheme)
        traces.append(ev.trace)
        if best is None or ev.trace < best[1].trace:
            best = (alphas, ev)
    return best[0], best[1], np.array(traces)
