"""Worker/integrator LLM ensemble: backends, caching, prompts and stage tasks."""

from .backends import CallContext, GenerationParams, LlmBackend, MockBackend, MockScript, OpenAICompatBackend
from .ensemble import AgreementOutcome, EnsembleConfig, EnsembleTaskRecord, classify_agreement, run_ensemble_task

__all__ = [
    "AgreementOutcome",
    "CallContext",
    "EnsembleConfig",
    "EnsembleTaskRecord",
    "GenerationParams",
    "LlmBackend",
    "MockBackend",
    "MockScript",
    "OpenAICompatBackend",
    "classify_agreement",
    "run_ensemble_task",
]
