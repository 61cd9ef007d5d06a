"""
Exception hierarchy for the model justifier.

Each stage raises the subclass naming its failure; main.py maps them to exit codes.
"""


class ModelJustifierError(Exception):
    """Base class for every error raised by this package."""


class ConfigValidationError(ModelJustifierError):
    """
    Raised when the analysis config has one or more problems.

    Args:
        problems: every problem found, in the order they were detected.
    """
    def __init__(self, problems):
        self.problems = list(problems)
        listing = "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(f"Configuration is invalid ({len(self.problems)} problem(s)):\n{listing}")


class PriorError(ModelJustifierError):
    pass


class BasisConstructionError(ModelJustifierError):
    def __init__(self, parameter, degree, message):
        self.parameter = parameter
        self.degree = degree
        super().__init__(f"Cannot build polynomial of degree {degree} for parameter '{parameter}': {message}")


class RootFindingError(ModelJustifierError):
    def __init__(self, coefficients, message):
        self.coefficients = list(coefficients)
        super().__init__(f"{message} (coefficients: {self.coefficients})")


class CollocationError(ModelJustifierError):
    pass


class RankDeficientDesignError(ModelJustifierError):
    def __init__(self, rank, required, near_duplicates):
        self.rank = rank
        self.required = required
        self.near_duplicates = list(near_duplicates)
        super().__init__(
            f"Design matrix has rank {rank}, {required} required. "
            f"Closest collocation point pairs: {self.near_duplicates}"
        )


class LoocvError(ModelJustifierError):
    pass


class ObservationError(ModelJustifierError):
    pass


class ModelEvaluationError(ModelJustifierError):
    pass


class LikelihoodUnderflowError(ModelJustifierError):
    pass


class ConfusionMatrixError(ModelJustifierError):
    pass


class PipelineRunError(ModelJustifierError):
    pass
