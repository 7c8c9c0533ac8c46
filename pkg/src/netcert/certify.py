"""Certificate LMIs and their semidefinite feasibility problems.

For each partition element the stacked stable system ``[N; D; I]`` and the
assembled static multiplier blocks combine, through the standard
Kalman-Yakubovich-Popov lemma, into one affine matrix inequality

    [[A'Q + QA, QB], [B'Q, 0]] + [C D]' Phi(lam, eps) [C D]  <=  0

in a symmetric matrix ``Q`` (unconstrained in sign), the shared multiplier
scalars ``lam`` and the per-element slack ``eps``.  Feasibility of the LMI
implies the frequency-domain inequality of the element, hence the element's
contribution to network stability; the implication needs no minimality
assumptions, so the certificate is sound regardless of the realization.

The package solves the margin form::

    maximize t   s.t.   every block <= -t*I,  lam >= floor,  eps >= floor,
                        t <= cap

and declares a point feasible when the attained margin clears ``t_accept``
*and* an independent eigenvalue re-check of every block passes.  In ``free``
mode the scalars are decision variables shared across overlapping elements
(one coupled SDP); in ``fixed`` mode they are frozen (default 1) and the
per-element SDPs are independent.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import NetcertError, NominalUnstableError, SolverFailureError
from .graph import EdgePartition, GraphTopology, build_partition
from .lti import (
    AgentModel,
    CoprimeFactorPair,
    NominalCheck,
    StateSpaceModel,
    check_nominal_stability,
    coprime_factorize,
    stacked_realization,
)
from .multiplier import (
    AssembledBlocks,
    ElementAssembler,
    MultiplierVariables,
    SectorBounds,
)
from .sdp import LinearMatrixBlock, SdpProblem, SdpSolution, dump_problem, solve_sdp

__all__ = [
    "SolverOptions",
    "LmiBlock",
    "CertificateProblem",
    "CertificateResult",
    "VerificationReport",
    "ElementCertifier",
    "build_kyp_lmi",
    "build_certificate_problem",
    "build_sdp",
    "solve",
    "certify_partition",
    "certify_monolithic",
    "verify_solution",
    "frequency_domain_check",
]


@dataclass(frozen=True)
class SolverOptions:
    """Numerical knobs of the certification SDPs."""

    backend: str = "cvxopt"
    lambda_floor: float = 1e-7
    lambda_cap: float = 1e4
    eps_floor: float = 1e-9
    t_accept: float = 1e-7
    t_cap: float = 1e3
    max_iterations: int = 100
    feastol: float = 1e-8
    abstol: float = 1e-8
    reltol: float = 1e-8
    verbose: bool = False

    def backend_options(self) -> dict:
        return {
            "max_iterations": self.max_iterations,
            "feastol": self.feastol,
            "abstol": self.abstol,
            "reltol": self.reltol,
            "verbose": self.verbose,
        }


@dataclass(frozen=True)
class LmiBlock:
    """Affine LMI data of one partition element.

    The image of ``(Q, lam, eps)`` is a symmetric matrix of dimension
    ``state dim + input dim`` of the element's stacked system.  ``q_coeffs``
    carries one coefficient matrix per upper-triangular entry of ``Q`` (row
    major), ``lam_coeffs`` one per multiplier scalar of the element.
    """

    element: int
    dim: int
    n_hat: int
    m_hat: int
    stacked: StateSpaceModel
    blocks: AssembledBlocks
    q_coeffs: np.ndarray       # (n_hat*(n_hat+1)//2, dim, dim)
    lam_coeffs: np.ndarray     # (m_hat, dim, dim)
    eps_coeff: np.ndarray      # (dim, dim)
    lam_global_ids: tuple[int, ...]

    @property
    def n_q(self) -> int:
        return self.n_hat * (self.n_hat + 1) // 2

    @property
    def variable_count(self) -> int:
        """Decision variables of the element with free scalars (incl. slack)."""
        return self.n_q + self.m_hat + 1

    def evaluate(self, Q: np.ndarray, lam_local: np.ndarray, eps: float) -> np.ndarray:
        """Re-substitute a solution directly from the state-space data.

        Intentionally avoids the cached coefficient tensors so verification
        follows an independent arithmetic path.
        """
        A, B = self.stacked.A, self.stacked.B
        Q = np.asarray(Q, dtype=float).reshape(self.n_hat, self.n_hat)
        M = np.zeros((self.dim, self.dim))
        M[: self.n_hat, : self.n_hat] = A.T @ Q + Q @ A
        M[: self.n_hat, self.n_hat:] = Q @ B
        M[self.n_hat:, : self.n_hat] = (Q @ B).T
        CD = np.hstack([self.stacked.C, self.stacked.D])
        M += CD.T @ self.blocks.phi_full(lam_local, eps) @ CD
        return M


def _q_basis_coefficients(stacked: StateSpaceModel, dim: int) -> np.ndarray:
    nx = stacked.nx
    A, B = stacked.A, stacked.B
    coeffs = np.zeros((nx * (nx + 1) // 2, dim, dim))
    pos = 0
    for a in range(nx):
        for b in range(a, nx):
            S = np.zeros((nx, nx))
            S[a, b] = 1.0
            S[b, a] = 1.0
            top = A.T @ S + S @ A
            right = S @ B
            coeffs[pos, :nx, :nx] = top
            coeffs[pos, :nx, nx:] = right
            coeffs[pos, nx:, :nx] = right.T
            pos += 1
    return coeffs


def build_kyp_lmi(stacked: StateSpaceModel, blocks: AssembledBlocks) -> LmiBlock:
    """Turn a stacked ``[N; D; I]`` realization plus assembled blocks into
    the affine LMI of the element.

    Raises
    ------
    NetcertError
        On dimension mismatch between the realization and the blocks.
    """
    n_hat, m_hat = stacked.nx, stacked.nu
    if stacked.ny != blocks.output_dim or m_hat != blocks.m_hat:
        raise NetcertError(
            f"stacked system ({stacked.ny} outputs, {m_hat} inputs) does not match "
            f"blocks ({blocks.output_dim} outputs, {blocks.m_hat} inputs)"
        )
    dim = n_hat + m_hat
    CD = np.hstack([stacked.C, stacked.D])
    nd = blocks.n_p + blocks.m_hat
    CD_top = CD[:nd, :]
    CD_bot = CD[nd:, :]

    lam_coeffs = np.einsum("ra,jrs,sb->jab", CD_top, blocks.core_coeffs, CD_top)
    eps_coeff = CD_bot.T @ blocks.W_hat @ CD_bot
    q_coeffs = _q_basis_coefficients(stacked, dim)
    return LmiBlock(
        element=blocks.element,
        dim=dim,
        n_hat=n_hat,
        m_hat=m_hat,
        stacked=stacked,
        blocks=blocks,
        q_coeffs=q_coeffs,
        lam_coeffs=lam_coeffs,
        eps_coeff=eps_coeff,
        lam_global_ids=blocks.global_ids,
    )


class ElementCertifier:
    """Per-element cache for sweeping many sector points.

    Holds the stacked realization, the sector-independent assembly basis and
    the sandwiched coefficient tensors; :meth:`lmi` at a concrete sector is a
    linear combination plus no re-sandwiching.
    """

    def __init__(
        self,
        topology: GraphTopology,
        partition: EdgePartition,
        p: int,
        factors: Mapping[int, CoprimeFactorPair],
    ):
        self.assembler = ElementAssembler(topology, partition, p)
        self.stacked = stacked_realization(topology, partition, p, factors)
        dim = self.stacked.nx + self.stacked.nu
        CD = np.hstack([self.stacked.C, self.stacked.D])
        nd = self.assembler.n_p + self.assembler.m_hat
        CD_top = CD[:nd, :]
        CD_bot = CD[nd:, :]
        # (m_hat, 3, dim, dim): per-scalar coefficient split by sector monomial
        self._sandwiched = np.einsum(
            "ra,jmrs,sb->jmab", CD_top, self.assembler._basis, CD_top
        )
        self._eps_coeff = CD_bot.T @ self.assembler.W_hat @ CD_bot
        self._q_coeffs = _q_basis_coefficients(self.stacked, dim)
        self.dim = dim

    def lmi(self, sector: SectorBounds) -> LmiBlock:
        mono = np.array(
            [-2.0 * sector.alpha * sector.beta, sector.alpha + sector.beta, -2.0]
        )
        lam_coeffs = np.einsum("m,jmab->jab", mono, self._sandwiched)
        return LmiBlock(
            element=self.assembler.p,
            dim=self.dim,
            n_hat=self.stacked.nx,
            m_hat=self.assembler.m_hat,
            stacked=self.stacked,
            blocks=self.assembler.assemble(sector),
            q_coeffs=self._q_coeffs,
            lam_coeffs=lam_coeffs,
            eps_coeff=self._eps_coeff,
            lam_global_ids=self.assembler.global_ids,
        )


@dataclass(frozen=True)
class CertificateProblem:
    """One certification problem: all element LMIs at one sector point."""

    topology: GraphTopology
    partition: EdgePartition
    sector: SectorBounds
    mode: str
    variables: MultiplierVariables
    lmi_blocks: tuple[LmiBlock, ...]
    options: SolverOptions

    @property
    def element_variable_counts(self) -> tuple[int, ...]:
        return tuple(b.variable_count for b in self.lmi_blocks)


def build_certificate_problem(
    topology: GraphTopology,
    partition: EdgePartition,
    sector: SectorBounds,
    mode: str = "free",
    factors: Mapping[int, CoprimeFactorPair] | None = None,
    agents: Sequence[AgentModel] | None = None,
    options: SolverOptions | None = None,
    certifiers: Sequence[ElementCertifier] | None = None,
) -> CertificateProblem:
    """Assemble the LMIs of every partition element at one sector point."""
    options = options or SolverOptions()
    if factors is None:
        if agents is None:
            raise NetcertError("need either coprime factors or agent models")
        factors = {a.index: coprime_factorize(a) for a in agents}
    if certifiers is None:
        certifiers = [
            ElementCertifier(topology, partition, p, factors)
            for p in range(1, partition.c + 1)
        ]
    blocks = tuple(cert.lmi(sector) for cert in certifiers)
    variables = (
        MultiplierVariables.free(topology, floor=options.lambda_floor)
        if mode == "free"
        else MultiplierVariables.fixed(topology, floor=options.lambda_floor)
    )
    return CertificateProblem(
        topology=topology,
        partition=partition,
        sector=sector,
        mode=mode,
        variables=variables,
        lmi_blocks=blocks,
        options=options,
    )


# --------------------------------------------------------------------------
# SDP packaging
# --------------------------------------------------------------------------


def build_sdp(problem: CertificateProblem) -> list[SdpProblem]:
    """Emit the problem in generic linear-SDP form.

    Free mode yields a single coupled problem; fixed mode yields one
    independent problem per element.
    """
    if problem.mode == "free":
        return [_build_free_sdp(problem)]
    return [_build_fixed_sdp(problem, blk) for blk in problem.lmi_blocks]


def _build_free_sdp(problem: CertificateProblem) -> SdpProblem:
    topo = problem.topology
    two_m = topo.two_m
    opts = problem.options
    c = len(problem.lmi_blocks)

    q_offsets = []
    pos = 0
    for blk in problem.lmi_blocks:
        q_offsets.append(pos)
        pos += blk.n_q
    lam_offset = pos
    eps_offset = lam_offset + two_m
    t_index = eps_offset + c
    n_vars = t_index + 1

    names = []
    for blk in problem.lmi_blocks:
        names += [f"q{blk.element}_{j}" for j in range(blk.n_q)]
    names += [f"lam_{j}" for j in range(two_m)]
    names += [f"eps_{blk.element}" for blk in problem.lmi_blocks]
    names += ["t"]

    blocks = []
    for off, blk in zip(q_offsets, problem.lmi_blocks):
        idx = np.concatenate(
            [
                np.arange(off, off + blk.n_q),
                lam_offset + np.asarray(blk.lam_global_ids),
                [eps_offset + blk.element - 1 + 0],
                [t_index],
            ]
        ).astype(int)
        coeffs = np.concatenate(
            [
                blk.q_coeffs,
                blk.lam_coeffs,
                blk.eps_coeff[None],
                np.eye(blk.dim)[None],
            ]
        )
        blocks.append(
            LinearMatrixBlock(
                dim=blk.dim,
                tag=f"element-{blk.element}",
                const=np.zeros((blk.dim, blk.dim)),
                coeff_idx=idx,
                coeffs=coeffs,
            )
        )

    rows, rhs = [], []
    for j in range(two_m):  # floor <= lam <= cap; the cap pins the scale of the
        row = np.zeros(n_vars)  # homogeneous problem so the solution set is bounded
        row[lam_offset + j] = -1.0
        rows.append(row)
        rhs.append(-opts.lambda_floor)
        row = np.zeros(n_vars)
        row[lam_offset + j] = 1.0
        rows.append(row)
        rhs.append(opts.lambda_cap)
    for p in range(c):  # eps >= floor
        row = np.zeros(n_vars)
        row[eps_offset + p] = -1.0
        rows.append(row)
        rhs.append(-opts.eps_floor)
    row = np.zeros(n_vars)  # t <= cap
    row[t_index] = 1.0
    rows.append(row)
    rhs.append(opts.t_cap)

    objective = np.zeros(n_vars)
    objective[t_index] = 1.0
    return SdpProblem(
        n_vars=n_vars,
        objective=objective,
        blocks=tuple(blocks),
        ineq_rows=np.asarray(rows),
        ineq_rhs=np.asarray(rhs),
        var_names=tuple(names),
    )


def _build_fixed_sdp(problem: CertificateProblem, blk: LmiBlock) -> SdpProblem:
    opts = problem.options
    lam_local = problem.variables.values[list(blk.lam_global_ids)]
    const = np.einsum("j,jab->ab", lam_local, blk.lam_coeffs)

    eps_index = blk.n_q
    t_index = blk.n_q + 1
    n_vars = blk.n_q + 2
    idx = np.concatenate([np.arange(blk.n_q), [eps_index], [t_index]]).astype(int)
    coeffs = np.concatenate(
        [blk.q_coeffs, blk.eps_coeff[None], np.eye(blk.dim)[None]]
    )
    block = LinearMatrixBlock(
        dim=blk.dim,
        tag=f"element-{blk.element}",
        const=const,
        coeff_idx=idx,
        coeffs=coeffs,
    )
    rows = np.zeros((2, n_vars))
    rows[0, eps_index] = -1.0
    rows[1, t_index] = 1.0
    rhs = np.array([-opts.eps_floor, opts.t_cap])
    objective = np.zeros(n_vars)
    objective[t_index] = 1.0
    names = tuple(
        [f"q{blk.element}_{j}" for j in range(blk.n_q)]
        + [f"eps_{blk.element}", "t"]
    )
    return SdpProblem(
        n_vars=n_vars,
        objective=objective,
        blocks=(block,),
        ineq_rows=rows,
        ineq_rhs=rhs,
        var_names=names,
    )


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CertificateResult:
    """Outcome of one certification problem.

    ``margin`` is the attained ``t*``; feasibility additionally requires the
    independent eigenvalue re-check of every block to pass (the solver is not
    trusted).  ``Q`` holds the per-element KYP matrices of the solution.
    """

    verdict: str                     # feasible | infeasible | solver-error | not-evaluated
    margin: float
    mode: str
    lam: np.ndarray                  # (2m,)
    eps: tuple[float, ...]
    Q: tuple[np.ndarray, ...]
    block_max_eigs: tuple[float, ...]
    status: str
    iterations: int
    solve_time: float
    warnings: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.verdict == "feasible"


@dataclass(frozen=True)
class VerificationReport:
    """Independent re-check of a solution against its LMI blocks."""

    max_eigenvalues: tuple[float, ...]
    threshold: float
    flagged_elements: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.flagged_elements


def _unpack_q(blk: LmiBlock, q_flat: np.ndarray) -> np.ndarray:
    Q = np.zeros((blk.n_hat, blk.n_hat))
    pos = 0
    for a in range(blk.n_hat):
        for b in range(a, blk.n_hat):
            Q[a, b] = q_flat[pos]
            Q[b, a] = q_flat[pos]
            pos += 1
    return Q


def solve(
    problem: CertificateProblem, raise_on_failure: bool = True
) -> CertificateResult:
    """Solve the margin-form SDP(s) of a certification problem.

    Fixed mode solves each element independently and aggregates: the point is
    feasible only if every element is, the margin is the worst one.

    Raises
    ------
    SolverFailureError
        Backend produced no usable iterate (only when ``raise_on_failure``).
    """
    opts = problem.options
    sdps = build_sdp(problem)
    solutions = [
        solve_sdp(sdp, backend=opts.backend, **opts.backend_options())
        for sdp in sdps
    ]

    warnings: list[str] = []
    two_m = problem.topology.two_m
    if problem.mode == "free":
        sol = solutions[0]
        if sol.x is None:
            if raise_on_failure:
                raise SolverFailureError(f"backend returned no iterate: {sol.message}")
            return _error_result(problem, sol)
        if sol.status != "optimal":
            warnings.append(f"NumericalWarning: backend status {sol.message!r}")
        pos = 0
        Qs, eigs = [], []
        for blk in problem.lmi_blocks:
            Qs.append(_unpack_q(blk, sol.x[pos:pos + blk.n_q]))
            pos += blk.n_q
        lam = sol.x[pos:pos + two_m].copy()
        eps = tuple(float(v) for v in sol.x[pos + two_m:pos + two_m + len(Qs)])
        t_star = float(sol.x[-1])
        for blk, Q, e in zip(problem.lmi_blocks, Qs, eps):
            eigs.append(_block_max_eig(blk, Q, lam, e))
        iterations, solve_time, status = sol.iterations, sol.solve_time, sol.status
    else:
        Qs, eigs, eps_list, t_list = [], [], [], []
        status = "optimal"
        iterations = 0
        solve_time = 0.0
        lam = problem.variables.values.copy()
        for blk, sol in zip(problem.lmi_blocks, solutions):
            iterations += sol.iterations
            solve_time += sol.solve_time
            if sol.x is None:
                if raise_on_failure:
                    raise SolverFailureError(
                        f"element {blk.element}: no iterate ({sol.message})"
                    )
                return _error_result(problem, sol)
            if sol.status != "optimal":
                status = sol.status
                warnings.append(
                    f"NumericalWarning: element {blk.element} status {sol.message!r}"
                )
            Q = _unpack_q(blk, sol.x[:blk.n_q])
            e = float(sol.x[blk.n_q])
            Qs.append(Q)
            eps_list.append(e)
            t_list.append(float(sol.x[-1]))
            eigs.append(_block_max_eig(blk, Q, lam, e))
        eps = tuple(eps_list)
        t_star = min(t_list)

    verified = all(
        eig <= -t_star / 2.0 + 1e-12 for eig in eigs
    ) if t_star > 0 else False
    feasible = t_star >= opts.t_accept and verified
    if t_star >= opts.t_accept and not verified:
        warnings.append(
            "NumericalWarning: solver margin not confirmed by independent "
            "eigenvalue check; declaring infeasible"
        )
    verdict = "feasible" if feasible else "infeasible"
    return CertificateResult(
        verdict=verdict,
        margin=t_star,
        mode=problem.mode,
        lam=lam,
        eps=eps,
        Q=tuple(Qs),
        block_max_eigs=tuple(eigs),
        status=status,
        iterations=iterations,
        solve_time=solve_time,
        warnings=tuple(warnings),
    )


def _block_max_eig(blk: LmiBlock, Q, lam_global, eps) -> float:
    lam_local = np.asarray(lam_global)[list(blk.lam_global_ids)]
    M = blk.evaluate(Q, lam_local, eps)
    return float(np.linalg.eigvalsh((M + M.T) / 2.0)[-1])


def _error_result(problem: CertificateProblem, sol: SdpSolution) -> CertificateResult:
    return CertificateResult(
        verdict="solver-error",
        margin=np.nan,
        mode=problem.mode,
        lam=problem.variables.values.copy(),
        eps=(),
        Q=(),
        block_max_eigs=(),
        status=sol.status,
        iterations=sol.iterations,
        solve_time=sol.solve_time,
        warnings=(f"solver failure: {sol.message}",),
    )


def verify_solution(
    result: CertificateResult, problem: CertificateProblem
) -> VerificationReport:
    """Re-evaluate every LMI block at the returned variables.

    Flags any element whose largest eigenvalue exceeds ``-margin/2``.
    """
    if not result.Q:
        return VerificationReport((), 0.0, tuple(b.element for b in problem.lmi_blocks))
    eigs, flagged = [], []
    threshold = -result.margin / 2.0
    for blk, Q, eps in zip(problem.lmi_blocks, result.Q, result.eps):
        eig = _block_max_eig(blk, Q, result.lam, eps)
        eigs.append(eig)
        if eig > threshold + 1e-12:
            flagged.append(blk.element)
    return VerificationReport(
        max_eigenvalues=tuple(eigs),
        threshold=threshold,
        flagged_elements=tuple(flagged),
    )


def frequency_domain_check(
    result: CertificateResult,
    problem: CertificateProblem,
    omegas: Sequence[float] | None = None,
    slack: float = 1e-6,
) -> tuple[float, bool]:
    """Frequency-domain shadow of the LMIs at the returned variables.

    Returns the largest eigenvalue of the sampled quadratic forms over all
    elements and frequencies, and whether it stays below ``slack``.
    """
    if omegas is None:
        omegas = np.logspace(-3, 3, 50)
    worst = -np.inf
    for blk, eps in zip(problem.lmi_blocks, result.eps):
        lam_local = result.lam[list(blk.lam_global_ids)]
        phi = blk.blocks.phi_full(lam_local, eps)
        for w in omegas:
            G = blk.stacked.transfer_at(1j * w)
            F = G.conj().T @ phi @ G
            worst = max(worst, float(np.linalg.eigvalsh((F + F.conj().T) / 2)[-1].real))
    return worst, worst <= slack


# --------------------------------------------------------------------------
# End-to-end certification entry points
# --------------------------------------------------------------------------


def certify_partition(
    topology: GraphTopology,
    agents: Sequence[AgentModel],
    partition: EdgePartition,
    sector: SectorBounds,
    mode: str = "free",
    options: SolverOptions | None = None,
    factors: Mapping[int, CoprimeFactorPair] | None = None,
    nominal: NominalCheck | None = None,
    raise_on_failure: bool = True,
) -> CertificateResult:
    """Certify one sector point under one partition.

    Refuses to run when the ideal-link network is unstable; returns a
    ``not-evaluated`` result when the sector does not contain zero (the
    certificates only cover deviations that can be scaled towards zero).
    """
    options = options or SolverOptions()
    if nominal is None:
        nominal = check_nominal_stability(topology, agents)
    if not nominal.stable:
        raise NominalUnstableError(nominal.abscissa)
    if not sector.contains_zero:
        return CertificateResult(
            verdict="not-evaluated",
            margin=np.nan,
            mode=mode,
            lam=np.ones(topology.two_m),
            eps=(),
            Q=(),
            block_max_eigs=(),
            status="skipped",
            iterations=0,
            solve_time=0.0,
            warnings=("sector does not contain zero; point not evaluated",),
        )
    problem = build_certificate_problem(
        topology, partition, sector, mode=mode, factors=factors, agents=agents,
        options=options,
    )
    return solve(problem, raise_on_failure=raise_on_failure)


def certify_monolithic(
    topology: GraphTopology,
    agents: Sequence[AgentModel],
    sector: SectorBounds,
    mode: str = "free",
    options: SolverOptions | None = None,
    factors: Mapping[int, CoprimeFactorPair] | None = None,
    nominal: NominalCheck | None = None,
) -> CertificateResult:
    """Certify with the single whole-edge-set partition element.

    Algebraically this reproduces the unpartitioned certificate under the
    same multiplier class: all weights are one and the selector is trivial.
    """
    partition = build_partition(topology, [set(range(1, topology.m + 1))])
    return certify_partition(
        topology, agents, partition, sector, mode=mode, options=options,
        factors=factors, nominal=nominal,
    )
