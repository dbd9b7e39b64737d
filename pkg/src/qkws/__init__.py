"""Small-footprint streaming keyword spotting.

A quantized LSTM acoustic model turns audio into phone posteriors; a
CTC trie search finds arbitrary user-defined keyword sequences in them
with calibrated confidence scores.
"""

from .confidence import ConfidenceKind, SegmentStats, score
from .ctc import (
    Posteriorgram,
    Segment,
    best_path_score,
    blank_mass,
    collapse,
    ctc_forward,
    ctc_viterbi,
)
from .decoder import (
    DecoderConfig,
    DetectionCandidate,
    StreamingDetector,
    apply_blank_skip,
    detect,
)
from .formats import load_model, read_matrix, save_model, write_matrix
from .frontend import (
    AudioBuffer,
    FeatureStream,
    FrontendConfig,
    compute_mfcc,
    extract_features,
    read_wav,
    stack_and_skip,
)
from .keywords import Keyword, KeywordTrie, build_trie, load_keyword_set, load_lexicon, resolve
from .metrics import QueryResult, exact_rate, f1
from .model import (
    AcousticModel,
    ModelStream,
    build_random_model,
    forward,
    forward_reference,
    quantize_model,
)
from .postproc import greedy, sequence
from .quantization import (
    ActivationLUT,
    QuantRange,
    QuantizedTensor,
    build_lut,
    fake_quantize,
    quantize_weights,
    rescale,
)

__version__ = "0.1.0"
