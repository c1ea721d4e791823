"""Exception hierarchy shared by every pipeline stage."""


class SustainError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""


class ValidationError(SustainError):
    """Input data or parameters violate a documented contract."""


class MalformedRow(ValidationError):
    def __init__(self, line_no, reason, path=None):
        self.line_no = line_no
        self.reason = reason
        self.path = path
        where = f"{path}:" if path else "line "
        super().__init__(f"{where}{line_no}: {reason}")


class EmptyInput(ValidationError):
    pass


class DuplicateEvent(ValidationError):
    pass


class DuplicateActor(ValidationError):
    pass


class InvariantViolation(ValidationError):
    pass


class EmptyCorpus(ValidationError):
    pass


class NoCommits(ValidationError):
    pass


class NoParticipants(ValidationError):
    pass


class MissingProfile(ValidationError):
    def __init__(self, actor_id):
        self.actor_id = actor_id
        super().__init__(f"no profile for actor {actor_id!r}")


class SingleClass(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class TooFewSamples(ValidationError):
    pass


class RankDeficient(ValidationError):
    pass


class NonpositiveWidth(ValidationError):
    pass


class EmptyGroup(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass
