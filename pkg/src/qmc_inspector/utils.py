import logging
from dataclasses import dataclass


# 配置日志
def setup_logging(quiet: bool = False):
    level = logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(levelname)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        force=True,
    )


logger = logging.getLogger("qmc-inspector")


@dataclass(frozen=True)
class Tolerances:
    """数值容差的集中配置。"""

    hermitian: float = 1e-10
    trace: float = 1e-10
    verdict: float = 1e-8
    cluster: float = 1e-7
    support_scale: float = 64.0


DEFAULT_TOLERANCES = Tolerances()


# --- 异常体系 ---
# 每个异常类携带 CLI 使用的退出码


class InspectorError(Exception):
    exit_code = 1


class ParseError(InspectorError):
    exit_code = 2


class InvariantViolation(InspectorError):
    exit_code = 3


class ResourceLimit(InspectorError):
    exit_code = 4


class NonHermitian(InvariantViolation):
    pass


class NonFinite(InvariantViolation):
    pass


class NegativeEigenvalue(InvariantViolation):
    pass


class TraceNotOne(InvariantViolation):
    pass


class UnknownLabel(InvariantViolation):
    pass


class DuplicateLabel(InvariantViolation):
    pass


class InvalidPermutation(InvariantViolation):
    pass


class SpecMismatch(InvariantViolation):
    pass


class BadPartition(InvariantViolation):
    pass


class AlphaOutOfRange(InvariantViolation):
    pass


class NonUnital(InvariantViolation):
    pass


class NotTracePreserving(InvariantViolation):
    pass


class DimMismatch(InvariantViolation):
    pass


class EtaBNotMaximallyMixed(InvariantViolation):
    pass


class NotCommutingMarginals(InvariantViolation):
    pass


class NotBSQMC(InvariantViolation):
    pass


class InconsistentCertificate(InvariantViolation):
    pass


class SingularityError(InvariantViolation):
    pass


class SingularSigma(SingularityError):
    pass


class SingularMarginal(SingularityError):
    pass


class SingularInput(SingularityError):
    pass


class SupportViolation(SingularityError):
    pass


class RankDeficientMarginal(SingularityError):
    pass


class TooLarge(ResourceLimit):
    pass
