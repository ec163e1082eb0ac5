"""Sparse robust H-infinity observer design."""

from .analysis import (CertificationReport, LmiCertificate, certify, hinf_norm, is_hurwitz,
                       robust_lmi_certificate, verify_lft, verify_structured)
from .design import (DesignError, DesignOptions, DesignResult, InfeasibleDesign, design_lft,
                     design_structured)
from .system_model import (AffineUncertainty, ErrorSystem, LftPlant, ObserverGain, PrecisionVector,
                           StateSpace, StateSpaceModel, build_lft_error_system,
                           build_structured_error_system, close_delta_loop)

__all__ = [
    "AffineUncertainty", "CertificationReport", "DesignError", "DesignOptions", "DesignResult",
    "ErrorSystem", "InfeasibleDesign", "LftPlant", "LmiCertificate", "ObserverGain",
    "PrecisionVector", "StateSpace", "StateSpaceModel", "build_lft_error_system",
    "build_structured_error_system", "certify", "close_delta_loop", "design_lft",
    "design_structured", "hinf_norm", "is_hurwitz", "robust_lmi_certificate", "verify_lft",
    "verify_structured",
]
