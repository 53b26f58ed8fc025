"""Exception types shared across the package.

Every error carries a stable machine-readable ``code`` of the form
``module.kind`` so that the experiment runner can surface failures in its
manifest without string matching.
"""


class GossipError(Exception):
    code = "gossipfield.error"

    def __init__(self, message, *, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ValidationError(GossipError):
    """Malformed input: bad graph, bad rates/trusts, bad parameters."""

    code = "network.validation"


class InfluenceError(ValidationError):
    """Some regular agent cannot reach any stubborn agent."""

    code = "network.influence"


class ReversibilityError(GossipError):
    """The regular-block jump matrix is not irreducible and reversible."""

    code = "network.reversibility"


class ConvergenceError(GossipError):
    """An iterative solver or sampler failed to reach its tolerance."""

    code = "solver.convergence"


class CapacityError(GossipError):
    """Problem size exceeds a documented cap for the requested method."""

    code = "solver.capacity"


class RecipeError(GossipError):
    """Invalid graph recipe or generation failure (e.g. connectivity retries)."""

    code = "generators.recipe"


class ExperimentError(GossipError):
    """Invalid experiment specification or run-level failure."""

    code = "cli.experiment"
