"""Exception hierarchy shared by all modules."""


class LatticeFarmError(Exception):
    pass


# su3core
class DegenerateMatrix(LatticeFarmError):
    pass


# lattice
class BadDecomposition(LatticeFarmError):
    pass


class SizeMismatch(LatticeFarmError):
    pass


class OutOfBounds(LatticeFarmError):
    pass


class HaloMiss(LatticeFarmError):
    pass


class FormatError(LatticeFarmError):
    pass


class ChecksumMismatch(FormatError):
    pass


# montecarlo
class NonConvergence(LatticeFarmError):
    pass


class DegenerateStaple(LatticeFarmError):
    pass


# comm
class CommError(LatticeFarmError):
    pass


class RendezvousTimeout(CommError):
    pass


class DuplicateRank(CommError):
    pass


class PeerClosed(CommError):
    pass


class Timeout(CommError):
    pass


class MessageTooLarge(CommError):
    pass


# bench
class NotEnoughRanks(LatticeFarmError):
    pass


class SingularMatrix(LatticeFarmError):
    pass


class NonPositiveThroughput(LatticeFarmError):
    pass


# cli
class ValidationError(LatticeFarmError):
    """Configuration rejected; ``field`` names the offending setting."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class LaunchFailure(LatticeFarmError):
    pass
