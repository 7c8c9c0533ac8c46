"""Generic linear-SDP form and solver backends.

A problem is a real decision vector ``x`` with

* matrix constraints ``C + sum_j x[idx_j] * A_j <= 0`` (negative
  semidefinite), one :class:`LinearMatrixBlock` each;
* scalar rows ``a @ x <= b``;
* a linear objective to maximize.

The form is deliberately backend-agnostic: any interior-point solver that
accepts affine symmetric-matrix constraints can be plugged in by registering
a callable in :data:`BACKENDS`.  Solutions are never trusted -- callers
re-verify them by eigenvalue computations -- so the backend contract is only
"return your best iterate and an honest status".

:func:`dump_problem` writes the full problem in a plain-text matrix format
for cross-checking against external solvers.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SolverBackendMissingError, SolverFailureError

__all__ = [
    "LinearMatrixBlock",
    "SdpProblem",
    "SdpSolution",
    "solve_sdp",
    "dump_problem",
    "BACKENDS",
]

#: Environment variable that turns on backend progress output.
VERBOSE_ENV = "NETCERT_SOLVER_VERBOSE"


@dataclass(frozen=True)
class LinearMatrixBlock:
    """One constraint ``const + sum_j x[idx[j]] * coeffs[j] <= 0``."""

    dim: int
    tag: str
    const: np.ndarray      # (dim, dim) symmetric
    coeff_idx: np.ndarray  # (nc,) variable indices
    coeffs: np.ndarray     # (nc, dim, dim) symmetric

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Constraint matrix at a decision vector."""
        if len(self.coeff_idx) == 0:
            return self.const.copy()
        return self.const + np.einsum(
            "j,jab->ab", np.asarray(x)[self.coeff_idx], self.coeffs
        )

    def max_eigenvalue(self, x: np.ndarray) -> float:
        M = self.evaluate(x)
        return float(np.linalg.eigvalsh((M + M.T) / 2.0)[-1])


@dataclass(frozen=True)
class SdpProblem:
    """Linear SDP over a flat decision vector; objective is maximized."""

    n_vars: int
    objective: np.ndarray                 # (n_vars,)
    blocks: tuple[LinearMatrixBlock, ...]
    ineq_rows: np.ndarray                 # (nr, n_vars); rows @ x <= rhs
    ineq_rhs: np.ndarray                  # (nr,)
    var_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.var_names and len(self.var_names) != self.n_vars:
            raise ValueError("var_names length mismatch")


@dataclass(frozen=True)
class SdpSolution:
    status: str            # optimal | infeasible | unbounded | unknown
    x: np.ndarray | None
    objective: float
    iterations: int
    solve_time: float
    message: str = ""


def _solve_cvxopt(problem: SdpProblem, options: dict) -> SdpSolution:
    try:
        from cvxopt import matrix, solvers
    except ImportError as exc:  # pragma: no cover - environment dependent
        raise SolverBackendMissingError("cvxopt is not installed") from exc

    n = problem.n_vars
    c = matrix(-np.asarray(problem.objective, dtype=float))

    Gl = hl = None
    if problem.ineq_rows.size:
        Gl = matrix(np.asarray(problem.ineq_rows, dtype=float))
        hl = matrix(np.asarray(problem.ineq_rhs, dtype=float))

    Gs, hs = [], []
    for blk in problem.blocks:
        G = np.zeros((blk.dim * blk.dim, n))
        for j, idx in enumerate(blk.coeff_idx):
            G[:, idx] += blk.coeffs[j].reshape(-1)
        Gs.append(matrix(G))
        hs.append(matrix(-np.asarray(blk.const, dtype=float)))

    verbose = bool(options.get("verbose")) or bool(os.environ.get(VERBOSE_ENV))
    solver_options = {
        "show_progress": verbose,
        "maxiters": int(options.get("max_iterations", 100)),
        "abstol": float(options.get("abstol", 1e-8)),
        "reltol": float(options.get("reltol", 1e-8)),
        "feastol": float(options.get("feastol", 1e-8)),
    }

    start = time.perf_counter()
    try:
        sol = solvers.sdp(c, Gl=Gl, hl=hl, Gs=Gs, hs=hs, options=solver_options)
    except (ArithmeticError, ValueError, ZeroDivisionError) as exc:
        return SdpSolution(
            status="unknown",
            x=None,
            objective=np.nan,
            iterations=0,
            solve_time=time.perf_counter() - start,
            message=f"cvxopt raised {exc!r}",
        )
    elapsed = time.perf_counter() - start

    status_map = {
        "optimal": "optimal",
        "primal infeasible": "infeasible",
        "dual infeasible": "unbounded",
        "unknown": "unknown",
    }
    status = status_map.get(sol["status"], "unknown")
    x = np.array(sol["x"]).reshape(-1) if sol["x"] is not None else None
    obj = float(problem.objective @ x) if x is not None else np.nan
    return SdpSolution(
        status=status,
        x=x,
        objective=obj,
        iterations=int(sol.get("iterations", 0)),
        solve_time=elapsed,
        message=sol["status"],
    )


BACKENDS: dict[str, Callable[[SdpProblem, dict], SdpSolution]] = {
    "cvxopt": _solve_cvxopt,
}


def solve_sdp(problem: SdpProblem, backend: str = "cvxopt", **options) -> SdpSolution:
    """Solve a problem with a registered backend.

    Raises
    ------
    SolverBackendMissingError
        Unknown backend name, or the backend's package is not installed.
    """
    try:
        fn = BACKENDS[backend]
    except KeyError:
        raise SolverBackendMissingError(
            f"no SDP backend named {backend!r}; registered: {sorted(BACKENDS)}"
        ) from None
    return fn(problem, options)


def dump_problem(problem: SdpProblem, path) -> None:
    """Write the problem in a plain-text matrix format.

    Layout: a header with counts, the objective row, the scalar rows, then
    one section per matrix block listing the constant and every variable
    coefficient matrix row-major at full precision.
    """
    with open(path, "w") as fh:
        fh.write("netcert-sdp 1\n")
        fh.write(f"variables {problem.n_vars}\n")
        if problem.var_names:
            fh.write("names " + " ".join(problem.var_names) + "\n")
        fh.write("maximize " + _row(problem.objective) + "\n")
        fh.write(f"scalar_rows {len(problem.ineq_rhs)}\n")
        for row, rhs in zip(problem.ineq_rows, problem.ineq_rhs):
            fh.write(_row(row) + " <= " + _num(rhs) + "\n")
        fh.write(f"blocks {len(problem.blocks)}\n")
        for blk in problem.blocks:
            fh.write(f"block {blk.tag} dim {blk.dim} terms {len(blk.coeff_idx)}\n")
            fh.write("const " + _row(blk.const.reshape(-1)) + "\n")
            for j, idx in enumerate(blk.coeff_idx):
                fh.write(f"var {idx} " + _row(blk.coeffs[j].reshape(-1)) + "\n")


def _num(v: float) -> str:
    return format(float(v), ".17g")


def _row(values: Sequence[float]) -> str:
    return " ".join(_num(v) for v in np.asarray(values).reshape(-1))
