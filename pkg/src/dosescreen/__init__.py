"""Screening engine for dosing-error narratives.

Multi-modal sparse features (medical patterns, word/char TF-IDF, optional
embedding and scorer blocks) feeding weighted gradient-boosted trees, with
stratified cross-validation, threshold analysis, hyperparameter search,
and experiment harnesses.
"""

__version__ = "0.1.0"
