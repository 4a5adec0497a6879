"""Exception hierarchy shared across the engine."""


class AgoraError(Exception):
    """Base class for all engine errors."""


# -- messaging ---------------------------------------------------------------

class BodySchemaError(AgoraError):
    """Envelope body does not match the schema of its msg_type."""


class SequenceViolation(AgoraError):
    """Envelope seq did not strictly increase for (sender, conversation)."""


class OverlappingPartitionCells(AgoraError):
    """Network partition cells are not pairwise disjoint."""


# -- registrar ---------------------------------------------------------------

class DuplicateAgentId(AgoraError):
    pass


class EmptyCapabilities(AgoraError):
    pass


class EmptyDomains(AgoraError):
    pass


class UnknownAgent(AgoraError):
    pass


class UnknownTag(AgoraError):
    pass


class SecurityViolation(AgoraError):
    pass


# -- identification ----------------------------------------------------------

class EmptyRequest(AgoraError):
    pass


class NoExpertsFound(AgoraError):
    pass


class UnknownAttribute(AgoraError):
    pass


class NotIdentified(AgoraError):
    pass


class InvalidFeedback(AgoraError):
    pass


# -- planner -----------------------------------------------------------------

class NoServiceMapping(AgoraError):
    pass


class InvalidEdit(AgoraError):
    pass


class NoCapableProvider(AgoraError):
    pass


# -- provisioning ------------------------------------------------------------

class UnmappedTask(AgoraError):
    pass


class MissingProfile(AgoraError):
    pass


class UnknownRequest(AgoraError):
    pass


# -- harness -----------------------------------------------------------------

class ParseError(AgoraError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnknownPolicyTarget(AgoraError):
    pass


class ReplayDivergence(AgoraError):
    def __init__(self, line_no, expected, actual):
        super().__init__(f"replay diverged at line {line_no}")
        self.line_no = line_no
        self.expected = expected
        self.actual = actual


class UnknownDigest(AgoraError):
    pass


class NonTerminalRecord(AgoraError):
    pass
