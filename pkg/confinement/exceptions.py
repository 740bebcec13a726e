# confinement/exceptions.py

class ToolkitError(Exception):
    """ Base class; `exit_code` is what the management commands exit with. """
    exit_code = 3


class ConfigError(ToolkitError, ValueError):
    """ Invalid run configuration or violated precondition. """
    exit_code = 2


class HypothesisError(ConfigError):
    """ A turning kernel fails one of the hypotheses H1-H4. """

    def __init__(self, hypothesis, message):
        self.hypothesis = hypothesis
        super().__init__(f"{hypothesis}: {message}")


class NumericalError(ToolkitError, ArithmeticError):
    """ A solver aborted (non-convergence, positivity loss, blow-up). """
    exit_code = 3


class BracketError(NumericalError):
    pass


class ConvergenceError(NumericalError):

    def __init__(self, message, iterations=None, residual=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(message)


class PositivityError(NumericalError):
    pass


class CFLError(ConfigError):
    """ Time step exceeds the stability limit of an explicit scheme. """


class BlowUpError(NumericalError):

    def __init__(self, message, step=None, time=None):
        self.step = step
        self.time = time
        super().__init__(message)


class VerificationFailure(ToolkitError):
    """ A check ran to completion but its measured value missed the tolerance. """
    exit_code = 1
