from .overlay import COLORMAP_ANCHORS, colormap, render_overlay
from .builder import (
    PROMPT_STAGES,
    PromptBundle,
    PromptPart,
    build_prompt,
    compute_verdict,
)
from .pipeline import (
    ExplanationRecord,
    ExplanationRequest,
    resolve_default_target,
    run_explanation,
)

__all__ = [
    "COLORMAP_ANCHORS", "colormap", "render_overlay",
    "PROMPT_STAGES", "PromptBundle", "PromptPart", "build_prompt",
    "compute_verdict",
    "ExplanationRecord", "ExplanationRequest", "run_explanation",
    "resolve_default_target",
]
