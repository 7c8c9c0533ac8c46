"""Sector multipliers and assembled certificate blocks.

Each link's uncertainty is a deviation from the ideal unity gain,
characterized only through a sector ``[beta, alpha]`` on its input-output
pairs.  Per agent the package uses one positive scalar per link, which
reproduces the classic sector multiplier

    [[-2*alpha*beta*sum(lam), (alpha+beta)*lam_row],
     [(alpha+beta)*lam_col,   -2*diag(lam)]]

and keeps the multiplier variable count of a partition element equal to its
link count.

:class:`ElementAssembler` turns one partition element into the static block
data of the certificate: the scaled multiplier, the weighted localized
Laplacian terms, the selector that rewrites the element onto the stacked
``[N; D; I]`` outputs, and the weighted identity channel for the per-element
slack.  Everything is affine in the multiplier scalars and the slack, and the
assembler caches the coefficient of every scalar split by the three sector
monomials (``alpha*beta``, ``alpha+beta``, constant) so a sweep re-assembles a
new sector point by a linear combination.

:func:`psi_blocks` provides the whole-network frequency-domain multiplier
obtained by rewriting the plant-side inequality onto the coprime factors; it
is used only by validation oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import NetcertError
from .graph import EdgePartition, GraphTopology, LocalizedMatrices, localized_matrices
from .lti import CoprimeFactorPair

__all__ = [
    "SectorBounds",
    "MultiplierVariables",
    "AssembledBlocks",
    "ElementAssembler",
    "sector_multiplier",
    "assemble_blocks",
    "psi_blocks",
    "MonolithicPsi",
    "lambda_slots",
]

#: Lower bound enforced on multiplier scalars when they are decision variables.
LAMBDA_FLOOR = 1e-7


@dataclass(frozen=True)
class SectorBounds:
    """Scalar sector ``[beta, alpha]`` for the per-link deviation gains.

    Certification runs additionally require ``beta <= 0 <= alpha`` so that
    scaling a deviation towards zero stays inside the sector; points that
    violate this are "not evaluated" rather than infeasible.
    """

    alpha: float
    beta: float
    theta1_deg: float | None = None
    theta2_deg: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise NetcertError("sector bounds must be finite")
        if self.beta > self.alpha:
            raise NetcertError(
                f"need beta <= alpha, got beta={self.beta}, alpha={self.alpha}"
            )

    @classmethod
    def from_angles_deg(cls, theta1: float, theta2: float) -> "SectorBounds":
        """Sector from angles in degrees: ``(alpha, beta) = (tan t2, tan t1)``."""
        for name, t in (("theta1", theta1), ("theta2", theta2)):
            if not -90.0 < t < 90.0:
                raise NetcertError(f"{name} must lie in (-90, 90) degrees, got {t}")
        return cls(
            alpha=math.tan(math.radians(theta2)),
            beta=math.tan(math.radians(theta1)),
            theta1_deg=float(theta1),
            theta2_deg=float(theta2),
        )

    @property
    def contains_zero(self) -> bool:
        return self.beta <= 0.0 <= self.alpha


@dataclass(frozen=True)
class MultiplierVariables:
    """Multiplier scalars: free SDP variables, or all values fixed.

    The flat layout assigns scalar ``(i, k)`` (vertex ``i``, local link
    ``k``) the same position as the stacked link coordinate, i.e.
    ``offsets[i-1] + k - 1``.
    """

    mode: str  # "free" | "fixed"
    values: np.ndarray  # (2m,) used in fixed mode
    floor: float = LAMBDA_FLOOR

    def __post_init__(self):
        if self.mode not in ("free", "fixed"):
            raise NetcertError(f"mode must be 'free' or 'fixed', got {self.mode!r}")
        values = np.asarray(self.values, dtype=float)
        if self.mode == "fixed" and np.any(values < self.floor):
            raise NetcertError("fixed multiplier values must be strictly positive")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def free(cls, topology: GraphTopology, floor: float = LAMBDA_FLOOR):
        return cls(mode="free", values=np.ones(topology.two_m), floor=floor)

    @classmethod
    def fixed(cls, topology: GraphTopology, values=None, floor: float = LAMBDA_FLOOR):
        if values is None:
            values = np.ones(topology.two_m)
        return cls(mode="fixed", values=np.asarray(values, dtype=float), floor=floor)


def lambda_slots(topology: GraphTopology) -> tuple[tuple[int, int], ...]:
    """Global ``(vertex, local link)`` pairs in flat multiplier order."""
    return tuple(
        (i, k)
        for i in range(1, topology.n + 1)
        for k in range(1, topology.degrees[i - 1] + 1)
    )


def sector_multiplier(
    m_i: int, sector: SectorBounds, lam: Sequence[float]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Multiplier blocks of one agent's link-deviation IQC.

    Returns ``(Pi1, Pi2, Pi3)`` with shapes ``(1,1)``, ``(1,m_i)`` and
    ``(m_i,m_i)``: ``Pi1 = -2*alpha*beta*sum(lam)``,
    ``Pi2 = (alpha+beta)*lam`` and ``Pi3 = -2*diag(lam)``.
    """
    lam = np.asarray(lam, dtype=float).reshape(m_i)
    if m_i < 1:
        raise NetcertError("agent must have at least one link")
    Pi1 = np.array([[-2.0 * sector.alpha * sector.beta * float(lam.sum())]])
    Pi2 = (sector.alpha + sector.beta) * lam.reshape(1, m_i)
    Pi3 = -2.0 * np.diag(lam)
    return Pi1, Pi2, Pi3


class ElementAssembler:
    """Sector-independent assembly basis for one partition element.

    Precomputes, per multiplier scalar of the element, the three coefficient
    matrices of the selector-conjugated block (split by sector monomial), so
    :meth:`assemble` at a concrete sector is a linear combination.
    """

    def __init__(self, topology: GraphTopology, partition: EdgePartition, p: int):
        if not partition.admissible:
            raise NetcertError(
                f"partition is not admissible: {'; '.join(partition.diagnostics)}"
            )
        self.topology = topology
        self.partition = partition
        self.p = p
        self.local = localized_matrices(topology, partition, p)

        verts = partition.vertex_sets[p - 1]
        self.vertices = verts
        self.n_p = len(verts)
        self.m_hat = self.local.m_hat
        degrees = [topology.degrees[i - 1] for i in verts]
        self.local_offsets = np.concatenate([[0], np.cumsum(degrees)])

        # slot j of the element <-> (vertex, local link); global flat id alongside
        self.slots = tuple(
            (i, k) for i in verts for k in range(1, topology.degrees[i - 1] + 1)
        )
        self.global_ids = tuple(
            topology.offsets[i - 1] + k - 1 for (i, k) in self.slots
        )

        np_, mh = self.n_p, self.m_hat
        # replication and selector onto [N; D; I] outputs
        That = np.zeros((mh, np_))
        for a in range(np_):
            That[self.local_offsets[a]:self.local_offsets[a + 1], a] = 1.0
        S = np.zeros((np_ + 2 * mh, np_ + mh))
        S[:np_, :np_] = np.eye(np_)
        S[np_:np_ + mh, :np_] = -That
        S[np_:np_ + mh, np_:] = np.eye(mh)
        S[np_ + mh:, np_:] = -np.eye(mh)
        self.T_hat = That
        self.S_hat = S

        # per-vertex and per-edge weights of the element
        xi = np.array([float(partition.vertex_weight(i)) for i in verts])
        self.xi = xi
        self.xi_sqrt = np.concatenate([np.sqrt(xi), np.repeat(np.sqrt(xi), degrees)])
        self.W_hat = np.diag(np.repeat(xi, degrees))  # vertex weights on link slots

        edge_ids = self.local.edge_ids
        eta = {k: float(partition.edge_weight(k)) for k in edge_ids}
        self.H_hat = sum(
            eta[k] * self.local.edge_laplacian(k) for k in edge_ids
        )

        # basis tensors: coefficient of each scalar, split by sector monomial
        self._basis = self._build_basis(eta)

    def _build_basis(self, eta: Mapping[int, float]) -> np.ndarray:
        np_, mh = self.n_p, self.m_hat
        dim = np_ + mh
        S = self.S_hat
        sq = self.xi_sqrt
        partition, local = self.partition, self.local
        edge_ids = local.edge_ids
        lap = {k: local.edge_laplacian(k) for k in edge_ids}
        zeta = eta  # same one-over-count weights apply to both roles

        basis = np.zeros((mh, 3, dim, dim))
        slot_agent = np.repeat(np.arange(np_), np.diff(self.local_offsets))
        for j in range(mh):
            a = slot_agent[j]
            inner = np.zeros((3, np_ + 2 * mh, np_ + 2 * mh))

            # scaled multiplier block, per monomial
            big = np.zeros((3, dim, dim))
            big[0, a, a] = 1.0                       # alpha*beta monomial
            big[1, a, np_ + j] = 1.0                 # alpha+beta monomial
            big[1, np_ + j, a] = 1.0
            big[2, np_ + j, np_ + j] = 1.0           # constant monomial
            big *= sq[None, :, None] * sq[None, None, :]
            inner[:, :dim, :dim] = big

            # unscaled multiplier rows against the weighted Laplacian terms
            hrow = self.H_hat[j, :]
            inner[1, a, dim:] += hrow
            inner[1, dim:, a] += hrow
            inner[2, np_ + j, dim:] += hrow
            inner[2, dim:, np_ + j] += hrow

            # quadratic Laplacian block (diagonal scalar at slot j)
            Z = np.zeros((mh, mh))
            for k in edge_ids:
                col_k = lap[k][:, j]
                Z += zeta[k] * np.outer(col_k, col_k)
                for l in sorted(partition.adjacent_edges[k - 1] & partition.sets[self.p - 1]):
                    theta = float(partition.pair_weight(k, l))
                    Z += theta * np.outer(col_k, lap[l][:, j])
            inner[2, dim:, dim:] = Z

            basis[j] = np.einsum("ra,mrs,sb->mab", S, inner, S)
        return basis

    def assemble(self, sector: SectorBounds) -> "AssembledBlocks":
        """Numeric affine blocks for one sector."""
        mono = np.array(
            [-2.0 * sector.alpha * sector.beta, sector.alpha + sector.beta, -2.0]
        )
        core = np.einsum("m,jmab->jab", mono, self._basis)
        return AssembledBlocks(assembler=self, sector=sector, core_coeffs=core)


@dataclass(frozen=True)
class AssembledBlocks:
    """Affine certificate blocks of one element at a concrete sector.

    ``core_coeffs[j]`` is the coefficient of the element's ``j``-th
    multiplier scalar in the selector-conjugated 2x2 block (acting on the
    ``[N; D]`` outputs); the slack enters only through the weighted identity
    on the trailing static outputs.
    """

    assembler: ElementAssembler
    sector: SectorBounds
    core_coeffs: np.ndarray  # (m_hat, n_p+m_hat, n_p+m_hat)

    @property
    def element(self) -> int:
        return self.assembler.p

    @property
    def n_p(self) -> int:
        return self.assembler.n_p

    @property
    def m_hat(self) -> int:
        return self.assembler.m_hat

    @property
    def output_dim(self) -> int:
        """Row count of the stacked ``[N; D; I]`` system."""
        return self.n_p + 2 * self.m_hat

    @property
    def S_hat(self) -> np.ndarray:
        return self.assembler.S_hat

    @property
    def W_hat(self) -> np.ndarray:
        return self.assembler.W_hat

    @property
    def H_hat(self) -> np.ndarray:
        return self.assembler.H_hat

    @property
    def xi_sqrt(self) -> np.ndarray:
        return self.assembler.xi_sqrt

    @property
    def slots(self) -> tuple[tuple[int, int], ...]:
        return self.assembler.slots

    @property
    def global_ids(self) -> tuple[int, ...]:
        return self.assembler.global_ids

    def local_lambda(self, lam_global: np.ndarray) -> np.ndarray:
        """Restrict a flat multiplier vector to the element's slots."""
        return np.asarray(lam_global, dtype=float)[list(self.global_ids)]

    # -- multiplier pieces (mainly for oracles and tests) -----------------

    def pi_hat(self, lam_local: np.ndarray):
        """Element multiplier blocks ``(Pi1, Pi2, Pi3)`` at numeric scalars."""
        asm = self.assembler
        lam_local = np.asarray(lam_local, dtype=float)
        np_, mh = self.n_p, self.m_hat
        Pi1 = np.zeros((np_, np_))
        Pi2 = np.zeros((np_, mh))
        for a in range(np_):
            sl = slice(asm.local_offsets[a], asm.local_offsets[a + 1])
            Pi1[a, a] = -2.0 * self.sector.alpha * self.sector.beta * lam_local[sl].sum()
            Pi2[a, sl] = (self.sector.alpha + self.sector.beta) * lam_local[sl]
        Pi3 = -2.0 * np.diag(lam_local)
        return Pi1, Pi2, Pi3

    def pi_tilde(self, lam_local: np.ndarray) -> np.ndarray:
        """Weight-scaled element multiplier."""
        Pi1, Pi2, Pi3 = self.pi_hat(lam_local)
        big = np.block([[Pi1, Pi2], [Pi2.T, Pi3]])
        return self.xi_sqrt[:, None] * big * self.xi_sqrt[None, :]

    def z_hat(self, lam_local: np.ndarray) -> np.ndarray:
        """Weighted quadratic Laplacian block at numeric scalars."""
        asm = self.assembler
        _, _, Pi3 = self.pi_hat(lam_local)
        part, local = asm.partition, asm.local
        Z = np.zeros((self.m_hat, self.m_hat))
        for k in local.edge_ids:
            Lk = local.edge_laplacian(k)
            Z += float(part.edge_weight(k)) * Lk @ Pi3 @ Lk
            for l in sorted(part.adjacent_edges[k - 1] & part.sets[asm.p - 1]):
                Ll = local.edge_laplacian(l)
                Z += float(part.pair_weight(k, l)) * Lk @ Pi3 @ Ll
        return Z

    def phi_core(self, lam_local: np.ndarray) -> np.ndarray:
        """Selector-conjugated 2x2 block at numeric scalars."""
        return np.einsum("j,jab->ab", np.asarray(lam_local, dtype=float),
                         self.core_coeffs)

    def phi_full(self, lam_local: np.ndarray, eps: float) -> np.ndarray:
        """Full 3x3 multiplier on the ``[N; D; I]`` outputs."""
        nd = self.n_p + self.m_hat
        out = np.zeros((self.output_dim, self.output_dim))
        out[:nd, :nd] = self.phi_core(lam_local)
        out[nd:, nd:] = eps * self.W_hat
        return out

    def phi_full_coefficient(self, j: int) -> np.ndarray:
        """Full-size coefficient of the element's ``j``-th scalar."""
        nd = self.n_p + self.m_hat
        out = np.zeros((self.output_dim, self.output_dim))
        out[:nd, :nd] = self.core_coeffs[j]
        return out

    def eps_coefficient(self) -> np.ndarray:
        """Full-size coefficient of the element's slack variable."""
        nd = self.n_p + self.m_hat
        out = np.zeros((self.output_dim, self.output_dim))
        out[nd:, nd:] = self.W_hat
        return out


def assemble_blocks(
    topology: GraphTopology,
    partition: EdgePartition,
    p: int,
    sector: SectorBounds,
    variables: MultiplierVariables,
    factors: Mapping[int, CoprimeFactorPair] | None = None,
) -> AssembledBlocks:
    """Assemble the affine certificate blocks of partition element ``p``.

    ``factors`` is only used for consistency checks (port counts); the blocks
    themselves are static and depend on the topology, the partition weights
    and the sector.
    """
    if factors is not None:
        for i in partition.vertex_sets[p - 1]:
            if i in factors and factors[i].m != topology.degrees[i - 1]:
                raise NetcertError(
                    f"agent {i}: factor ports {factors[i].m} != degree "
                    f"{topology.degrees[i - 1]}"
                )
    del variables  # affine representation carries the scalars symbolically
    return ElementAssembler(topology, partition, p).assemble(sector)


class MonolithicPsi:
    """Frequency-domain whole-network multiplier on the coprime factors.

    Evaluates the congruence of the link multiplier by ``[[N, 0], [J, -I]]``
    at individual frequencies.  The quadratic block is static and equals the
    link block of the multiplier.  Used by validation oracles only.
    """

    def __init__(
        self,
        topology: GraphTopology,
        sector: SectorBounds,
        lam: np.ndarray,
        factors: Mapping[int, CoprimeFactorPair],
    ):
        self.topology = topology
        self.sector = sector
        lam = np.asarray(lam, dtype=float).reshape(topology.two_m)
        self.lam = lam
        self.factors = dict(factors)
        blocks = []
        for i in range(1, topology.n + 1):
            mi = topology.degrees[i - 1]
            rows = topology.vertex_rows(i)
            blocks.append(sector_multiplier(mi, sector, lam[list(rows)]))
        self._pi = blocks

    def multiplier(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Whole-network ``(Pi1, Pi2, Pi3)`` blocks."""
        Pi1 = scipy.linalg.block_diag(*[b[0] for b in self._pi])
        Pi2 = scipy.linalg.block_diag(*[b[1] for b in self._pi])
        Pi3 = scipy.linalg.block_diag(*[b[2] for b in self._pi])
        return Pi1, Pi2, Pi3

    def at(self, omega: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(Psi1, Psi2, Psi3)`` at ``s = 1j*omega`` (complex Hermitian parts)."""
        s = 1j * omega
        N = scipy.linalg.block_diag(
            *[self.factors[i].N.transfer_at(s) for i in range(1, self.topology.n + 1)]
        )
        J = scipy.linalg.block_diag(
            *[self.factors[i].J.transfer_at(s) for i in range(1, self.topology.n + 1)]
        )
        Pi1, Pi2, Pi3 = self.multiplier()
        Nh = N.conj().T
        Jh = J.conj().T
        Psi1 = Nh @ Pi1 @ N + Nh @ Pi2 @ J + Jh @ Pi2.conj().T @ N + Jh @ Pi3 @ J
        Psi2 = -(Nh @ Pi2 + Jh @ Pi3)
        return Psi1, Psi2, Pi3.astype(complex)


def psi_blocks(
    topology: GraphTopology,
    sector: SectorBounds,
    variables: MultiplierVariables,
    factors: Mapping[int, CoprimeFactorPair],
) -> MonolithicPsi:
    """Whole-network frequency-domain multiplier evaluator."""
    return MonolithicPsi(topology, sector, variables.values, factors)
