class NumericalBlowUp(ArithmeticError):
    """A simulation produced non-finite values.

    ``step`` is the index at which it happened, when known; ``stage`` names
    the pipeline stage (data, drive, fit, predict).
    """

    def __init__(self, message: str, step=None, stage=None):
        super().__init__(message)
        self.step = step
        self.stage = stage
