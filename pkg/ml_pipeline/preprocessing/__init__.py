from .data_validator import DataValidator, Violation, validate_posteriorgram
from .feature_scaling import VARIANCE_FLOOR, Standardizer

__all__ = ["DataValidator", "Standardizer", "VARIANCE_FLOOR", "Violation", "validate_posteriorgram"]
