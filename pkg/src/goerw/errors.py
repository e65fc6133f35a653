"""Package-level error types."""


class RefusalError(RuntimeError):
    """An experiment declined to run because its preconditions would make
    the answer meaningless (too close to criticality, too few conditioned
    samples, and so on). Runners turn this into a nonzero exit with no
    output files."""
