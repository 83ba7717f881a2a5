from typing import Optional

from intersim.context import context
from intersim.utils import TextReference, dataclass


@dataclass
class IntersimError(Exception):
    message: str
    where: Optional[dict] = None

    @classmethod
    def make(cls, message, **kw):
        "Creates the error, stamping it with the current run and slot (if any)"
        return cls(message, context.snapshot() or None, **kw)

    def location(self):
        if not self.where:
            return ''
        return ', '.join('%s=%s' % (k, v) for k, v in sorted(self.where.items()))

    def __str__(self):
        loc = self.location()
        name = type(self).__name__
        return f'{name}: {self.message}' + (f' [{loc}]' if loc else '')


@dataclass
class ValidationError(IntersimError):
    pass


@dataclass
class InputLengthError(IntersimError):
    pass


@dataclass
class DomainError(IntersimError):
    pass


@dataclass
class ModelError(IntersimError):
    pass


@dataclass
class UnsoundLinearization(ModelError):
    pass


@dataclass
class OrderingViolation(IntersimError):
    pass


@dataclass
class SolverError(IntersimError):
    status: str = 'unknown'
    model_dump: Optional[str] = None


@dataclass
class SimulationAborted(IntersimError):
    cause: Optional[Exception] = None


@dataclass
class ConfigError(IntersimError):
    field: str = ''
    text_ref: Optional[TextReference] = None

    def __str__(self):
        res = f'ConfigError: {self.field}: {self.message}' if self.field else f'ConfigError: {self.message}'
        if self.text_ref is not None:
            res += '\n' + self.text_ref.get_pinpoint_text()
        return res


@dataclass
class ConfigSyntaxError(ConfigError):
    pass
