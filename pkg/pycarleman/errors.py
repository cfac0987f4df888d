""" Holds local library error types """

class LabException(Exception):
    """ Base class for exceptions in pycarleman """
    def __init__(self, value):
        """ Set value of error message """
        super(LabException, self).__init__()
        self.value = value
    def __str__(self):
        """ Output representation of error """
        return repr(self.value)

class ValidationError(LabException):
    """ Contract Violation Wrapper """

class GridError(ValidationError):
    """ Grid Construction Error Wrapper """

class StaggeringError(ValidationError):
    """ Staggering Mismatch Error Wrapper """

class StabilityError(ValidationError):
    """ Time Step Stability Bound Wrapper """

class InadmissibleError(ValidationError):
    """ Admissible Source Error Wrapper """

class CertificateError(ValidationError):
    """ Weight Certificate Error Wrapper """

class ConfigError(ValidationError):
    """ Run Configuration Error Wrapper """

class StorageError(ValidationError):
    """ File I/O Error Wrapper """

class FormatError(StorageError):
    """ CNSF Format Error Wrapper """

class NumericalError(LabException):
    """ Numerical Failure Wrapper """

class ProjectionError(NumericalError):
    """ Poisson Solver Non-convergence Wrapper """

class SolverError(NumericalError):
    """ Forward Solver Error Wrapper """

class CarlemanError(NumericalError):
    """ Refused Carleman Evaluation Wrapper """
