"""Test-time scaling toolkit for autoregressive generators.

Decode one shared answer from N augmented views of an input by merging
per-step token distributions; optionally adapt aggregation weights or
model parameters at test time; compare against answer-level selection
baselines; score everything with the bundled metric suite.
"""

from .adapt import (
    AdaptConfig,
    WeightOptConfig,
    entropy_gradient,
    fine_tune_on_pseudolabel,
    marginal_entropy,
    optimize_weights,
    ttadapt_answer,
    ttadapt_weights_generate,
)
from .baselines import (
    sample_and_rank,
    self_consistency,
    self_select,
    self_synthesize,
    temperature_sample,
)
from .core import (
    FINAL_LAYER,
    AugmentedInput,
    GenerationConfig,
    GenerationTrace,
    MetricResult,
    QuestionRecord,
    read_question_records,
    validate_distribution,
    write_question_records,
)
from .decoder import (
    aggregate_average,
    aggregate_entropy_weighted,
    aggregate_majority,
    aggregate_most_confident,
    greedy_generate,
    ttaug_generate,
)
from .evalkit import (
    exact_match,
    mcq_extract,
    normalize_text,
    relaxed_match,
    rouge_l,
    score_record,
    substring_match,
    uniform_interval_sample,
    vqa_score,
)
from .generator import (
    GeneratorHandle,
    GeneratorServer,
    RemoteGenerator,
    ToyModel,
    ToyModelSpec,
    TableEntry,
)
from .imageaug import TransformSpec, apply_image_aug, catalog
from .runner import (
    OverheadReport,
    RunConfig,
    augment_dump,
    bench_overhead,
    build_augmented_inputs,
    run_eval,
)
from .textaug import (
    classical_text_pipeline,
    enforce_consistency,
    keyboard_error,
    self_paraphrase,
    sentence_reorder,
    word_delete,
    word_split,
)
from .theory import (
    ChainParams,
    SelectionModel,
    expected_selected_quality,
    feasible_selector_accuracy,
    k_n,
    p_answer,
    p_token,
    theorem_check,
)

__version__ = "0.1.0"
