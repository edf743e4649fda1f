"""Single-token event tagger: training, evaluation, and an HTTP service.

Binary O/EVENT token classification with a fixed fine-tuning recipe. The
served /tag endpoint speaks the wire protocol the belief-prediction
pipeline's service event strategy consumes: POST {"text", "tokens"?} in,
{"events": [...]} out, events always a subset of the input tokens.
"""

from .data import (
    LABEL_EVENT,
    LABEL_O,
    LABELS,
    DataFormatError,
    TokenExample,
    load_token_corpus,
)
from .train import (
    DEFAULT_BASE_MODEL,
    TaggerHyperparams,
    TrainingError,
    encode_batch,
    quiet_transformers,
    train_step,
    train_tagger,
)
from .tiny import build_tiny_base
from .evaluate import (
    TokenScore,
    evaluate_tagger,
    load_model,
    predict_events,
    predict_events_batch,
    score_event_sets,
)
from .serve import TagService, make_server, serve_tagger

__version__ = "0.1.0"
