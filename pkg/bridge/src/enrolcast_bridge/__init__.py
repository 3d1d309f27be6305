"""Adapter-protocol server for zero-shot time-series foundation models.

One model per process: the server loads a single pretrained model (or a
deterministic stub), announces itself over the ``enrolcast-adapter/1``
handshake, and answers newline-delimited JSON forecast requests on stdio.
Weights are never updated; covariates are consumed per family capability
(native channels, a residual-linear wrapper, or not at all).
"""

__version__ = "0.1.0"

from .spec import BridgeError, BridgeModelSpec  # noqa: F401
from .server import serve  # noqa: F401
from .stubs import stub_model  # noqa: F401
