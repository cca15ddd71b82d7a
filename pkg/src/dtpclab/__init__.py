"""
Capacity, identification and secrecy tools for the discrete-time Poisson channel.

Submodules: ``channel``, ``capacity``, ``idcode``, ``secrecy``, ``converse``, ``cli``.
"""
from .capacity import (
    CapacityResult,
    CertificationError,
    DiscreteInputDistribution,
    SidReport,
    WiretapPair,
    blahut_arimoto,
    mutual_information,
    secrecy_capacity,
    sid_capacity,
)
from .channel import GenericDmc, PoissonChannel, PowerConstraint, StateChannel, kl_poisson, total_variation
from .converse import converse_experiment, gamma_bound
from .idcode import build_id_code, identify, measure_errors
from .secrecy import eve_indistinguishability, exact_leakage, leakage_report

__all__ = [
    "CapacityResult", "CertificationError", "DiscreteInputDistribution", "SidReport", "WiretapPair",
    "blahut_arimoto", "mutual_information", "secrecy_capacity", "sid_capacity",
    "GenericDmc", "PoissonChannel", "PowerConstraint", "StateChannel", "kl_poisson", "total_variation",
    "converse_experiment", "gamma_bound", "build_id_code", "identify", "measure_errors",
    "eve_indistinguishability", "exact_leakage", "leakage_report",
]
