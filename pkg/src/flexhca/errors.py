"""Exception hierarchy shared by all flexhca modules."""


class FlexHcaError(Exception):
    """Base class for every error raised by flexhca."""


class MalformedCsv(FlexHcaError, ValueError):
    pass


class NegativeLoad(FlexHcaError, ValueError):
    pass


class InvalidFeeder(FlexHcaError, ValueError):
    pass


class NotATree(InvalidFeeder):
    pass


class DisconnectedBus(InvalidFeeder):
    pass


class InfeasibleScaling(FlexHcaError):
    pass


class RankOutOfRange(FlexHcaError, IndexError):
    pass


class Infeasible(FlexHcaError):
    """No non-negative capacity satisfies the constraints."""


class NonnegativityViolated(Infeasible):
    """Curtailment would have to push the new load below zero.

    ``slots`` lists the offending 0-indexed time slots.
    """

    def __init__(self, message, slots=()):
        super().__init__(message)
        self.slots = list(slots)


class AssumptionViolated(FlexHcaError):
    """A modelling precondition does not hold for the given instance."""


class ThmFourPreconditionViolated(AssumptionViolated):
    pass


class UpperBoundUnsafe(AssumptionViolated):
    pass


class EventNearHorizonEnd(FlexHcaError):
    pass


class LpNumericalFailure(FlexHcaError):
    pass


class DegenerateTail(FlexHcaError, ValueError):
    pass


class DegenerateRange(FlexHcaError, ValueError):
    pass


class ConfigError(FlexHcaError, ValueError):
    pass
