"""Exception types raised across the package."""


class FairplError(Exception):
    """Base class for all fairpl errors."""


class Infeasible(FairplError):
    """Fairness constraints admit no valid top-k composition."""


class GroupTooSmall(FairplError):
    """A group's lower bound exceeds the number of items it contains."""


class LengthMismatch(FairplError):
    """A ranking's length does not match the expected k."""


class EmptyPool(FairplError):
    pass


class SlotsExceedPool(FairplError):
    pass


class ItemNotInPool(FairplError):
    pass


class DuplicateItem(FairplError):
    pass


class TooLarge(FairplError):
    """Instance exceeds the brute-force enumeration guard."""


class Exhausted(FairplError):
    """Rejection sampling hit its trial budget without a fair draw."""


class ShapeMismatch(FairplError):
    pass


class DimMismatch(FairplError):
    pass


class NonFiniteLoss(FairplError):
    """Training produced non-finite scores or gradients."""


class ConstructionFailure(FairplError):
    """The deterministic greedy re-ranker could not complete a ranking."""


class IncompatibleCheckpoint(FairplError):
    pass


class UnknownQuery(FairplError):
    pass


class ParseError(FairplError):
    """Malformed ranking-file line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MissingGroup(ParseError):
    pass


class InconsistentFeatureDim(ParseError):
    pass


class EmptyDataset(FairplError):
    pass


class TooFewQueries(FairplError):
    pass
