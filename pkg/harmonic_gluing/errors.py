from typing import Optional

import wandb


class GluingError(wandb.Error):
    """Base class of every error raised by `harmonic_gluing`.

    Subclasses `wandb.Error` so that the CLI and any W&B integration treat gluing
    failures like any other W&B-reported failure.

    Args:
        message (str): Human readable message, including the measured numbers.
        stage (Optional[str]): Name of the pipeline stage that raised the error, if known.
        context (Optional[dict]): Extra diagnostics attached to the error.
    """

    def __init__(
        self, message: str, stage: Optional[str] = None, context: Optional[dict] = None
    ) -> None:
        super().__init__(message, context=context)
        self.stage = stage

    def annotate(self, stage: str) -> "GluingError":
        """Return a copy of the error tagged with the pipeline stage it came from."""
        annotated = type(self).__new__(type(self))
        GluingError.__init__(
            annotated, f"[{stage}] {self.message}", stage=stage, context=self.context
        )
        return annotated

    def __reduce__(self):
        return type(self), (self.message, self.stage, self.context)


class VectorTooLong(GluingError):
    pass


class ChartEscape(GluingError):
    pass


class OutOfInjectivityRadius(GluingError):
    pass


class NoConvergence(GluingError):
    pass


class InadmissibleParams(GluingError):
    pass


class ResolutionTooCoarse(GluingError):
    pass


class MissingNodes(GluingError):
    pass


class WrongDomain(GluingError):
    pass


class MatchingViolation(GluingError):
    pass


class SpanningFailure(GluingError):
    pass


class SingularSystem(GluingError):
    pass


class NoContraction(GluingError):
    pass


class HypothesisViolation(GluingError):
    pass


class ConfigParse(GluingError):
    pass


class InsufficientPoints(GluingError):
    pass
