"""Exception hierarchy. Every error carries a stable short code used by the CLI."""


class GwasVerifyError(Exception):
    code = "E_GENERIC"


class DatasetFormatError(GwasVerifyError, ValueError):
    code = "E_PARSE"


class GenotypeDomainError(GwasVerifyError, ValueError):
    code = "E_DOMAIN"


class EmptyGroupError(GwasVerifyError, ValueError):
    code = "E_EMPTY_GROUP"


class InfeasibleConfigError(GwasVerifyError, ValueError):
    code = "E_CONFIG"


class DegenerateTableError(GwasVerifyError, ValueError):
    code = "E_DEGENERATE"


class UnidentifiableError(GwasVerifyError, ValueError):
    code = "E_UNIDENTIFIABLE"


class UndefinedDeviationError(GwasVerifyError, ValueError):
    code = "E_UNDEFINED_DEVIATION"


class CalibrationError(GwasVerifyError, RuntimeError):
    code = "E_CALIBRATION"


class CalibrationMismatchError(GwasVerifyError, ValueError):
    code = "E_CALIBRATION_MISMATCH"


class SchemaError(GwasVerifyError, ValueError):
    code = "E_SCHEMA"
