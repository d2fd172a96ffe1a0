"""Exception hierarchy.

Everything raised on bad input derives from :class:`InputError` so the CLI can
map it to exit code 1; :class:`InvariantViolation` maps to exit code 2.
"""


class FlowsegError(Exception):
    pass


class InputError(FlowsegError):
    pass


class InvariantViolation(FlowsegError):
    pass


class MagicMismatch(InputError):
    pass


class TruncatedFile(InputError):
    pass


class NonFiniteValue(InputError):
    pass


class IoFailure(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class DepthMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class RingNotFull(InputError):
    pass


class ZeroInterval(InputError):
    pass


class NonPositiveBalance(InputError):
    pass


class NonPositiveCutoff(InputError):
    pass


class TooFewPoints(InputError):
    pass


class EmptyInput(InputError):
    pass


class NegativeTau(InputError):
    pass


class ZeroPeaks(InputError):
    pass


class EmptySegment(InputError):
    pass


class FrameCountMismatch(InputError):
    pass


class MissingRoiFile(InputError):
    pass


class FrameGap(InputError):
    pass


class ConfigInvalid(InputError):
    pass
