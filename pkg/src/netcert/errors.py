"""Exception hierarchy shared across the package."""

from __future__ import annotations


class NetcertError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(NetcertError):
    """Model file is missing, malformed, or violates the schema."""


class TopologyError(NetcertError):
    """Graph input is not a simple connected graph on >= 2 vertices."""


class PartitionError(NetcertError):
    """Edge partition is structurally invalid or not admissible."""


class EmptyElementError(PartitionError):
    def __init__(self, element: int):
        self.element = element
        super().__init__(f"partition element {element} is empty")


class BadEdgeIdError(PartitionError):
    def __init__(self, element: int, edge_id: int, m: int):
        self.element = element
        self.edge_id = edge_id
        super().__init__(
            f"partition element {element} references edge id {edge_id}; "
            f"valid ids are 1..{m}"
        )


class NotConnectedError(PartitionError):
    def __init__(self, element: int):
        self.element = element
        super().__init__(
            f"edge-induced sub-graph of partition element {element} is not connected"
        )


class NotCoveringError(PartitionError):
    def __init__(self, missing: tuple[int, ...]):
        self.missing = tuple(missing)
        super().__init__(
            f"partition does not cover the edge set; missing edge ids {list(self.missing)}"
        )


class Assumption2ViolatedError(PartitionError):
    """Some edge's adjacent edges are not jointly covered by the elements containing it."""

    def __init__(self, edge_id: int, uncovered: tuple[int, ...]):
        self.edge_id = edge_id
        self.uncovered = tuple(uncovered)
        super().__init__(
            f"edge {edge_id}: adjacent edge ids {list(self.uncovered)} are not covered "
            f"by any element containing edge {edge_id}"
        )


class LtiError(NetcertError):
    """State-space algebra failure."""


class UnstabilizableError(LtiError):
    """No stabilizing feedback (or dual observer gain) exists for the realization."""


class ResidualTooLargeError(LtiError):
    """Factorization produced residuals above tolerance (numerical failure)."""


class AlgebraicLoopError(LtiError):
    """Static loop gain is singular; the interconnection is ill-posed."""


class NominalUnstableError(NetcertError):
    """The network with ideal links is not stable; certification refuses to run."""

    def __init__(self, abscissa: float):
        self.abscissa = abscissa
        super().__init__(
            f"ideal-link network is not stable (spectral abscissa {abscissa:.6g})"
        )


class SolverBackendMissingError(NetcertError):
    """Requested SDP backend is not installed or not registered."""


class SolverFailureError(NetcertError):
    """SDP backend terminated without a usable status."""
