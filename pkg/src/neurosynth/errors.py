"""Exception hierarchy shared across the toolchain.

User/input problems derive from :class:`InputError`; numerical faults raised
while simulating derive from :class:`NumericFault`. The CLI maps the two
families onto exit codes 1 and 2.
"""

from __future__ import annotations


class NeurosynthError(Exception):
    """Base class for every error raised by this package."""


class InputError(NeurosynthError, ValueError):
    """Bad model source, configuration or netlist."""


class NumericFault(NeurosynthError, ArithmeticError):
    """A simulation left the valid numerical or physical regime."""


class DSLError(InputError):
    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)


class DSLSyntaxError(DSLError):
    pass


class UndeclaredIdentifierError(DSLError):
    pass


class DuplicateDeclarationError(DSLError):
    pass


class ExponentError(DSLError):
    pass


class ZeroDivisorError(DSLError):
    pass


class UnboundVariableError(NeurosynthError, KeyError):
    def __str__(self) -> str:
        return f"unbound variable {self.args[0]!r}"


class DomainError(NeurosynthError, ValueError):
    """A single-sided block received a negative input."""


class ConfigError(InputError):
    pass


class SynthesisError(InputError):
    pass


class UnsupportedExpressionError(SynthesisError):
    pass


class NetlistError(InputError):
    pass


class SignDisciplineError(NetlistError):
    """A net that must carry a nonnegative current went negative."""


class RegionFault(NumericFault):
    """A core transistor left strong-inversion saturation."""

    def __init__(self, device: str, overdrive: float, time: float | None = None):
        self.device = device
        self.overdrive = overdrive
        self.time = time
        at = f" at t={time:.6g} s" if time is not None else ""
        super().__init__(
            f"{device} left strong-inversion saturation (overdrive {overdrive:.3e} V){at}"
        )

    def at(self, time: float) -> "RegionFault":
        return RegionFault(self.device, self.overdrive, time)


class DivergenceError(NumericFault):
    def __init__(self, time: float, name: str | None = None):
        self.time = time
        self.name = name
        what = f" in {name!r}" if name else ""
        super().__init__(f"non-finite state{what} at t={time:.6g}")


class AnalysisError(NeurosynthError, ValueError):
    pass


class ConvergenceError(NumericFault):
    pass
