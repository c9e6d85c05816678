"""
Processors Module

Classical post-processing steps of the key distillation chain.
"""

from .cascade import CascadeReconciler, cascade_reconcile
from .distillation import encode_bits, postselect, sift, stage_accounting
from .privacy_amplification import confirmation_hash, final_key_length, privacy_amplify

__all__ = [
    "CascadeReconciler",
    "cascade_reconcile",
    "encode_bits",
    "postselect",
    "sift",
    "stage_accounting",
    "confirmation_hash",
    "final_key_length",
    "privacy_amplify",
]
