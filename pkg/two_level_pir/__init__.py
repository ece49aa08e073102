"""
Two-Level PIR Toolkit
=====================

Private information retrieval for replicated message stores where the first K1
messages are protected against T1 colluding servers and every message against T2.

Provides exact rate calculators, the successive-cancellation (NS) and
block-cancellation (NB) coding schemes, a structural privacy auditor and a
multi-server retrieval harness.
"""

from .config import APP_VERSION

__version__ = APP_VERSION
