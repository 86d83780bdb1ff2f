class TMDError(Exception):
    pass


class ParameterError(TMDError, ValueError):
    pass


class BasisMismatchError(TMDError, ValueError):
    pass


class NonHermitianError(TMDError, ValueError):
    pass


class NormalizationError(TMDError, ValueError):
    pass


class EigensolverError(TMDError, RuntimeError):
    pass


class EmptyShellError(TMDError, ValueError):
    pass


class FitError(TMDError, ValueError):
    pass


class ConstraintError(TMDError, ValueError):
    pass


class CriticalPointError(TMDError, ArithmeticError):
    pass


class ScenarioError(TMDError, ValueError):
    '''Scenario validation failed; ``errors`` holds the coded error dicts.'''
    def __init__(self, errors):
        self.errors = list(errors)
        lines = [
            '%s: %s %s' % (e['path'], e['code'], e['message'])
            for e in self.errors
        ]
        super(ScenarioError, self).__init__('\n'.join(lines))
