"""Masked-language-model pretraining lab: tokenizer, encoder, trainer, evaluator."""

from ._babylab import (  # noqa: F401
    Error,
    Hyperparams,
    ModelConfig,
    Parameters,
    Vocabulary,
    bpe_capacity,
    config_schema,
    count_parameters,
    default_config,
    emit_report,
    evaluate_suite,
    forward,
    generate_patterns,
    generate_toy_grammar,
    init_parameters,
    load_checkpoint,
    load_sweep,
    preset_config,
    pretrain,
    pseudo_log_likelihood,
    save_checkpoint,
    select_best,
    spearman,
    train_bpe,
)

__version__ = "0.1.0"
