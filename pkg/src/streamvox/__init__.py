"""Desk-scale engine for streaming speech-interaction pipelines.

Modules: :mod:`~streamvox.schedule` (read/write interleaving policy),
:mod:`~streamvox.numerics` (gate fusion and gradient kernels),
:mod:`~streamvox.fsq` (speech-token codec), :mod:`~streamvox.ttslm`
(schedule-driven toy speech-token model), :mod:`~streamvox.pipeline`
(latency model, simulator, calibration), :mod:`~streamvox.evalkit`
(text metrics), :mod:`~streamvox.datagen` (dialogue synthesis), and
:mod:`~streamvox.cli` (command-line front end).
"""

from .schedule import Action, SchedulePolicy, build_sequence, training_mask, visible_prefix

__version__ = "0.1.0"

__all__ = [
    "Action",
    "SchedulePolicy",
    "build_sequence",
    "training_mask",
    "visible_prefix",
    "__version__",
]
