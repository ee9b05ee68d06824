"""Main Stages class that combines all pipeline stages."""

from .assemble import AssembleStages
from .output import OutputStages
from .preprocess import PreprocessStages
from .solve import SolveStages


class Stages(
    PreprocessStages,
    AssembleStages,
    SolveStages,
    OutputStages,
):
    """All pipeline stages combined."""

    pass
