"""Continuous-time state-space algebra and coprime factorization.

The module carries three layers:

* :class:`StateSpaceModel` -- a plain immutable ``(A, B, C, D)`` container
  with frequency evaluation, block-diagonal composition and a stability test
  based on the spectral abscissa;
* :class:`AgentModel` -- one network agent: ``m_i`` inputs, a single output,
  optionally declared as a SISO transfer function broadcast over all inputs
  (realized with one copy of the SISO dynamics driven by the input sum);
* :func:`coprime_factorize` -- a right coprime factorization
  ``H = N D^{-1}`` with stable factors and stable Bezout witnesses
  ``U N + V D = I``.  Stable agents get the trivial pair ``(H, I)``;
  unstable agents get factors built from a stabilizing state feedback (LQR
  by default) and witnesses from the dual observer gain.

:func:`check_nominal_stability` closes the ideal-link network loop and tests
its spectral abscissa, and :func:`stacked_realization` assembles the
shared-state system ``[N; D; I]`` of one partition element that feeds the
certificate LMIs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    AlgebraicLoopError,
    LtiError,
    ResidualTooLargeError,
    UnstabilizableError,
)
from .graph import EdgePartition, GraphTopology, build_subsystem_matrices

__all__ = [
    "StateSpaceModel",
    "AgentModel",
    "CoprimeFactorPair",
    "NominalCheck",
    "spectral_abscissa",
    "is_stable",
    "block_diag",
    "balanced_realization",
    "coprime_factorize",
    "check_nominal_stability",
    "stacked_realization",
    "default_frequency_grid",
]

#: Margin used to call a spectral abscissa "stable" in floating point.
STABILITY_MARGIN = 1e-9

#: Residual tolerance for factorization and Bezout identities.
FACTOR_TOL = 1e-8


def _as_matrix(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class StateSpaceModel:
    """Real continuous-time realization ``dx = Ax + Bu, y = Cx + Du``.

    ``nx`` may be zero, in which case the model is the static gain ``D``.
    Entries must be finite; dimensions are validated on construction.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A)
        D = _as_matrix(self.D)
        ny, nu = D.shape
        nx = A.shape[0] if A.size else 0
        if A.size != nx * nx:
            raise LtiError(f"A must be square, got shape {A.shape}")
        A = A.reshape(nx, nx)
        B = np.asarray(self.B, dtype=float)
        if B.size != nx * nu:
            raise LtiError(f"B must have {nx}x{nu} entries, got shape {B.shape}")
        B = B.reshape(nx, nu)
        C = np.asarray(self.C, dtype=float)
        if C.size != ny * nx:
            raise LtiError(f"C must have {ny}x{nx} entries, got shape {C.shape}")
        C = C.reshape(ny, nx)
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            if mat.size and not np.all(np.isfinite(mat)):
                raise LtiError(f"{name} has non-finite entries")
            mat.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def nx(self) -> int:
        return self.A.shape[0]

    @property
    def nu(self) -> int:
        return self.D.shape[1]

    @property
    def ny(self) -> int:
        return self.D.shape[0]

    @classmethod
    def static(cls, D) -> "StateSpaceModel":
        D = _as_matrix(D)
        return cls(np.zeros((0, 0)), np.zeros((0, D.shape[1])), np.zeros((D.shape[0], 0)), D)

    @classmethod
    def from_transfer_function(
        cls, num: Sequence[float], den: Sequence[float], balance: bool = True
    ) -> "StateSpaceModel":
        """Realize a proper SISO transfer function.

        Coefficients are highest power first.  The realization is the
        controllable companion form; stable systems are then balanced for
        conditioning.
        """
        num = np.atleast_1d(np.asarray(num, dtype=float))
        den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
        if den.size == 0:
            raise LtiError("zero denominator")
        if num.size > den.size:
            raise LtiError("transfer function must be proper")
        num = num / den[0]
        den = den / den[0]
        n = den.size - 1
        if n == 0:
            return cls.static([[num[-1] if num.size else 0.0]])
        num = np.concatenate([np.zeros(den.size - num.size), num])
        d0 = num[0]
        # strictly proper remainder: num - d0*den
        rem = (num - d0 * den)[1:]
        A = np.zeros((n, n))
        A[0, :] = -den[1:]
        if n > 1:
            A[1:, :-1] = np.eye(n - 1)
        B = np.zeros((n, 1))
        B[0, 0] = 1.0
        C = rem.reshape(1, n)
        model = cls(A, B, C, [[d0]])
        if balance and is_stable(model):
            try:
                model = balanced_realization(model)
            except LtiError:
                pass  # keep the companion form when Gramians are singular
        return model

    def transfer_at(self, s: complex) -> np.ndarray:
        """Transfer matrix ``D + C (sI - A)^{-1} B`` at one complex point."""
        if self.nx == 0:
            return self.D.astype(complex)
        resolvent = np.linalg.solve(s * np.eye(self.nx) - self.A, self.B)
        return self.D + self.C @ resolvent

    def frequency_response(self, omegas: Sequence[float]) -> np.ndarray:
        """Stacked responses at ``s = 1j*omega``; shape ``(len(omegas), ny, nu)``."""
        return np.stack([self.transfer_at(1j * w) for w in np.asarray(omegas)])


def spectral_abscissa(model: StateSpaceModel) -> float:
    """Largest real part of the eigenvalues of ``A`` (``-inf`` if stateless)."""
    if model.nx == 0:
        return -np.inf
    return float(np.max(np.linalg.eigvals(model.A).real))


def is_stable(model: StateSpaceModel, margin: float = STABILITY_MARGIN) -> bool:
    """Whether every eigenvalue of ``A`` has real part below ``-margin``."""
    return spectral_abscissa(model) < -margin


def block_diag(models: Sequence[StateSpaceModel]) -> StateSpaceModel:
    """Direct sum of realizations: inputs, outputs and states concatenate."""
    A = scipy.linalg.block_diag(*[m.A for m in models])
    B = scipy.linalg.block_diag(*[m.B for m in models])
    C = scipy.linalg.block_diag(*[m.C for m in models])
    D = scipy.linalg.block_diag(*[m.D for m in models])
    return StateSpaceModel(A, B, C, D)


def balanced_realization(model: StateSpaceModel) -> StateSpaceModel:
    """Gramian-balance a stable realization.

    Raises ``LtiError`` when either Gramian is numerically singular (the
    realization is not minimal); callers may keep the original form then.
    """
    if model.nx == 0:
        return model
    if not is_stable(model):
        raise LtiError("balancing requires a stable realization")
    Wc = scipy.linalg.solve_continuous_lyapunov(model.A, -model.B @ model.B.T)
    Wo = scipy.linalg.solve_continuous_lyapunov(model.A.T, -model.C.T @ model.C)
    try:
        R = scipy.linalg.cholesky(Wc, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise LtiError("controllability Gramian not positive definite") from exc
    M = R.T @ Wo @ R
    sigma2, V = np.linalg.eigh(M)
    order = np.argsort(sigma2)[::-1]
    sigma2 = sigma2[order]
    V = V[:, order]
    if sigma2[-1] <= 0:
        raise LtiError("observability Gramian not positive definite")
    Tmat = R @ V * sigma2 ** -0.25
    Tinv = (V.T @ scipy.linalg.solve_triangular(R, np.eye(model.nx), lower=True)
            ) * sigma2[:, None] ** 0.25
    return StateSpaceModel(
        Tinv @ model.A @ Tmat, Tinv @ model.B, model.C @ Tmat, model.D
    )


@dataclass(frozen=True)
class AgentModel:
    """One network agent: ``n_inputs`` link inputs, a single output."""

    index: int
    n_inputs: int
    model: StateSpaceModel
    siso: StateSpaceModel | None = None  # retained when built by broadcast

    def __post_init__(self):
        if self.model.ny != 1:
            raise LtiError(f"agent {self.index}: must have a single output")
        if self.model.nu != self.n_inputs:
            raise LtiError(
                f"agent {self.index}: realization has {self.model.nu} inputs, "
                f"expected {self.n_inputs}"
            )

    @classmethod
    def from_siso(cls, index: int, n_inputs: int, g: StateSpaceModel) -> "AgentModel":
        """Broadcast a SISO system over ``n_inputs`` ports.

        One copy of ``g`` is driven by the sum of the ports, so the state
        dimension stays that of ``g``.
        """
        if g.ny != 1 or g.nu != 1:
            raise LtiError(f"agent {index}: broadcast source must be SISO")
        ones = np.ones((1, n_inputs))
        model = StateSpaceModel(g.A, g.B @ ones, g.C, g.D @ ones)
        return cls(index=index, n_inputs=n_inputs, model=model, siso=g)

    @classmethod
    def from_transfer_function(
        cls, index: int, n_inputs: int, num, den
    ) -> "AgentModel":
        return cls.from_siso(
            index, n_inputs, StateSpaceModel.from_transfer_function(num, den)
        )


def default_frequency_grid(n: int = 50) -> np.ndarray:
    """Log-spaced verification frequencies in ``[1e-3, 1e3]`` rad/s."""
    return np.logspace(-3.0, 3.0, n)


@dataclass(frozen=True)
class CoprimeFactorPair:
    """Right coprime factorization of one agent with shared factor state.

    ``N`` (1 x m) and ``D`` (m x m) share the state realization
    ``(A, B)``; both are stable, ``H = N D^{-1}``, and the stable witnesses
    satisfy ``U N + V D = I``.  Residuals of both identities on the
    verification grid are stored.
    """

    agent_index: int
    A: np.ndarray
    B: np.ndarray
    C_n: np.ndarray
    D_n: np.ndarray
    C_d: np.ndarray
    D_d: np.ndarray
    U: StateSpaceModel
    V: StateSpaceModel
    bezout_residual: float
    factorization_residual: float

    @property
    def nu(self) -> int:
        """Shared state dimension of the factor pair."""
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.D_d.shape[1]

    @property
    def N(self) -> StateSpaceModel:
        return StateSpaceModel(self.A, self.B, self.C_n, self.D_n)

    @property
    def D(self) -> StateSpaceModel:
        return StateSpaceModel(self.A, self.B, self.C_d, self.D_d)

    @property
    def J(self) -> StateSpaceModel:
        """The agent-diagonal factor ``D - ones * N`` (shared state)."""
        ones = np.ones((self.m, 1))
        return StateSpaceModel(
            self.A, self.B, self.C_d - ones @ self.C_n, self.D_d - ones @ self.D_n
        )

    def nd_stack(self) -> StateSpaceModel:
        """Shared-state realization of ``[N; D]``."""
        return StateSpaceModel(
            self.A,
            self.B,
            np.vstack([self.C_n, self.C_d]),
            np.vstack([self.D_n, self.D_d]),
        )


def _pbh_uncontrollable_modes(A: np.ndarray, B: np.ndarray, margin: float) -> list[complex]:
    """Eigenvalues with Re >= -margin failing the controllability rank test."""
    bad = []
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if lam.real < -margin:
            continue
        pencil = np.hstack([A - lam * np.eye(n), B])
        if np.linalg.matrix_rank(pencil, tol=1e-9 * max(1.0, np.abs(lam))) < n:
            bad.append(complex(lam))
    return bad


def _lqr_gain(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """State feedback ``F`` with ``A + B F`` Hurwitz (unit-weight LQR)."""
    X = scipy.linalg.solve_continuous_are(A, B, np.eye(A.shape[0]), np.eye(B.shape[1]))
    return -B.T @ X


def coprime_factorize(
    agent: AgentModel,
    feedback: np.ndarray | None = None,
    margin: float = STABILITY_MARGIN,
    tol: float = FACTOR_TOL,
    omegas: np.ndarray | None = None,
) -> CoprimeFactorPair:
    """Right coprime factorization ``H = N D^{-1}`` with Bezout witnesses.

    Stable agents return the trivial pair ``N = H``, ``D = I`` with static
    witnesses ``U = 0``, ``V = I``; this keeps ``D`` static and the shared
    state dimension equal to the agent's.  Unstable agents use a stabilizing
    feedback ``F`` (unit-weight LQR unless ``feedback`` is supplied) and a
    dual observer gain for the witnesses.  Both identities are verified on a
    log-spaced frequency grid.

    Raises
    ------
    UnstabilizableError
        When an unstable mode is uncontrollable (or unobservable, which
        defeats the observer-side witness construction).
    ResidualTooLargeError
        When the verified residuals exceed ``tol``.
    """
    H = agent.model
    mi = agent.n_inputs
    if omegas is None:
        omegas = default_frequency_grid()

    if is_stable(H, margin):
        pair = CoprimeFactorPair(
            agent_index=agent.index,
            A=H.A,
            B=H.B,
            C_n=H.C,
            D_n=H.D,
            C_d=np.zeros((mi, H.nx)),
            D_d=np.eye(mi),
            U=StateSpaceModel.static(np.zeros((mi, 1))),
            V=StateSpaceModel.static(np.eye(mi)),
            bezout_residual=0.0,
            factorization_residual=0.0,
        )
        return pair

    A, B, C, D = H.A, H.B, H.C, H.D
    bad = _pbh_uncontrollable_modes(A, B, margin)
    if bad:
        raise UnstabilizableError(
            f"agent {agent.index}: uncontrollable unstable modes {bad}"
        )
    bad = _pbh_uncontrollable_modes(A.T, C.T, margin)
    if bad:
        raise UnstabilizableError(
            f"agent {agent.index}: unobservable unstable modes {bad} "
            "(no stable Bezout witnesses)"
        )

    if feedback is None:
        try:
            F = _lqr_gain(A, B)
        except Exception as exc:
            raise UnstabilizableError(
                f"agent {agent.index}: feedback synthesis failed ({exc})"
            ) from exc
    else:
        F = np.asarray(feedback, dtype=float).reshape(mi, H.nx)
    A_f = A + B @ F
    if np.max(np.linalg.eigvals(A_f).real) >= -margin:
        raise UnstabilizableError(
            f"agent {agent.index}: A + B F is not Hurwitz for the supplied feedback"
        )

    try:
        Lgain = _lqr_gain(A.T, C.T).T  # A + L C Hurwitz
    except Exception as exc:
        raise UnstabilizableError(
            f"agent {agent.index}: observer gain synthesis failed ({exc})"
        ) from exc
    A_l = A + Lgain @ C

    U = StateSpaceModel(A_l, Lgain, F, np.zeros((mi, 1)))
    V = StateSpaceModel(A_l, B + Lgain @ D, -F, np.eye(mi))

    pair = CoprimeFactorPair(
        agent_index=agent.index,
        A=A_f,
        B=B,
        C_n=C + D @ F,
        D_n=D,
        C_d=F,
        D_d=np.eye(mi),
        U=U,
        V=V,
        bezout_residual=np.nan,
        factorization_residual=np.nan,
    )
    bez, fac = factorization_residuals(H, pair, omegas)
    if bez > tol or fac > tol:
        raise ResidualTooLargeError(
            f"agent {agent.index}: residuals bezout={bez:.3e} factor={fac:.3e} "
            f"exceed {tol:.1e}"
        )
    return dataclasses.replace(pair, bezout_residual=bez, factorization_residual=fac)


def factorization_residuals(
    H: StateSpaceModel, pair: CoprimeFactorPair, omegas: np.ndarray
) -> tuple[float, float]:
    """Max-norm residuals of ``U N + V D - I`` and ``H - N D^{-1}`` on a grid.

    The factorization residual is relative: each deviation is scaled by
    ``1 + ||H(jw)||`` so frequencies near poles do not dominate.
    """
    mi = pair.m
    bez = 0.0
    fac = 0.0
    for w in omegas:
        s = 1j * w
        Nw = pair.N.transfer_at(s)
        Dw = pair.D.transfer_at(s)
        Uw = pair.U.transfer_at(s)
        Vw = pair.V.transfer_at(s)
        bez = max(bez, np.linalg.norm(Uw @ Nw + Vw @ Dw - np.eye(mi), 2))
        Hw = H.transfer_at(s)
        scale = 1.0 + np.linalg.norm(Hw, 2)
        NDinv = np.linalg.solve(Dw.T, Nw.T).T
        fac = max(fac, np.linalg.norm(Hw - NDinv, 2) / scale)
    return float(bez), float(fac)


@dataclass(frozen=True)
class NominalCheck:
    """Outcome of the ideal-link network stability test."""

    stable: bool
    abscissa: float
    margin: float


def check_nominal_stability(
    topology: GraphTopology,
    agents: Sequence[AgentModel],
    margin: float = STABILITY_MARGIN,
) -> NominalCheck:
    """Close the ideal-link network loop and test its spectral abscissa.

    The loop is ``v = P w`` with ``w`` the replicated agent outputs driven by
    ``v``; eliminating the static part requires the loop gain ``I - P T D``
    to be invertible.

    Raises
    ------
    AlgebraicLoopError
        When the static loop gain is singular beyond tolerance.
    """
    agents = sorted(agents, key=lambda a: a.index)
    _check_agent_cover(topology, agents)
    H = block_diag([a.model for a in agents])
    sub = build_subsystem_matrices(topology)
    PT = (sub.P @ sub.T).astype(float)
    loop = np.eye(topology.two_m) - PT @ H.D
    if _near_singular(loop):
        raise AlgebraicLoopError("static loop gain I - P T D is singular")
    if H.nx == 0:
        return NominalCheck(stable=True, abscissa=-np.inf, margin=margin)
    A_cl = H.A + H.B @ np.linalg.solve(loop, PT @ H.C)
    abscissa = float(np.max(np.linalg.eigvals(A_cl).real))
    return NominalCheck(stable=abscissa < -margin, abscissa=abscissa, margin=margin)


def _near_singular(M: np.ndarray, rtol: float = 1e10) -> bool:
    try:
        return np.linalg.cond(M) > rtol
    except np.linalg.LinAlgError:
        return True


def _check_agent_cover(topology: GraphTopology, agents: Sequence[AgentModel]) -> None:
    ids = [a.index for a in agents]
    if ids != list(range(1, topology.n + 1)):
        raise LtiError(f"need agents 1..{topology.n} exactly once, got ids {ids}")
    for a in agents:
        if a.n_inputs != topology.degrees[a.index - 1]:
            raise LtiError(
                f"agent {a.index}: {a.n_inputs} inputs but vertex degree is "
                f"{topology.degrees[a.index - 1]}"
            )


def stacked_realization(
    topology: GraphTopology,
    partition: EdgePartition,
    p: int,
    factors: Mapping[int, CoprimeFactorPair],
) -> StateSpaceModel:
    """Shared-state realization of ``[N; D; I]`` for partition element ``p``.

    Outputs stack as: the element's agent outputs (one per agent, natural
    order), then the grouped ``D`` outputs, then a static identity on the
    ``m_hat`` inputs.  One copy of each agent's factor state drives both its
    ``N`` and ``D`` rows.
    """
    verts = partition.vertex_sets[p - 1]
    missing = [i for i in verts if i not in factors]
    if missing:
        raise LtiError(f"element {p}: missing coprime factors for agents {missing}")
    pairs = [factors[i] for i in verts]
    for i, pair in zip(verts, pairs):
        if pair.m != topology.degrees[i - 1]:
            raise LtiError(
                f"agent {i}: factor has {pair.m} ports, degree is "
                f"{topology.degrees[i - 1]}"
            )

    n_p = len(verts)
    m_hat = sum(pair.m for pair in pairs)
    A = scipy.linalg.block_diag(*[pair.A for pair in pairs])
    B = scipy.linalg.block_diag(*[pair.B for pair in pairs])
    C_n = scipy.linalg.block_diag(*[pair.C_n for pair in pairs])
    C_d = scipy.linalg.block_diag(*[pair.C_d for pair in pairs])
    D_n = scipy.linalg.block_diag(*[pair.D_n for pair in pairs])
    D_d = scipy.linalg.block_diag(*[pair.D_d for pair in pairs])
    nx = A.shape[0]
    C = np.vstack([C_n.reshape(n_p, nx), C_d.reshape(m_hat, nx), np.zeros((m_hat, nx))])
    D = np.vstack([D_n.reshape(n_p, m_hat), D_d.reshape(m_hat, m_hat), np.eye(m_hat)])
    return StateSpaceModel(A, B, C, D)
