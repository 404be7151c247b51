"""Multi-site tabular classification meta-analysis toolkit.

Genetic-algorithm feature selection with random-forest cross-validated
fitness, hierarchical selection rounds, per-site bootstrap statistics with
Pearson correlation, and exact t-SNE embedding of scan conditions, plus a
synthetic multi-site data generator for end-to-end validation.
"""

__version__ = "0.1.0"

from .cv import CVResult, accuracy, cv_accuracy, kfold_indices
from .embed import EmbeddingConfig, ScanVector, encode_scan_conditions, standardize, tsne
from .forest import ForestConfig, ForestModel, fit, predict
from .ga import GAConfig, GAResult, evolve, init_population
from .hier import ReportRow, RoundHistory, run_rounds, run_rounds_by_site, site_wise_eval
from .meta import (
    CorrelationResult,
    SiteStats,
    bootstrap_site,
    correlate,
    pearson_p,
    pearson_r,
    phenotype_stats,
)
from .synth import SynthConfig, generate, generate_size_quality_study
from .tabular import (
    FeatureTable,
    PhenotypeRecord,
    ScanParamsRecord,
    TableFormatError,
    apply_mask,
    load_feature_table,
    load_phenotypes,
    load_scan_params,
    partition_by_site,
    save_feature_table,
)

__all__ = [
    "__version__",
    "CVResult", "accuracy", "cv_accuracy", "kfold_indices",
    "EmbeddingConfig", "ScanVector", "encode_scan_conditions", "standardize", "tsne",
    "ForestConfig", "ForestModel", "fit", "predict",
    "GAConfig", "GAResult", "evolve", "init_population",
    "ReportRow", "RoundHistory", "run_rounds", "run_rounds_by_site", "site_wise_eval",
    "CorrelationResult", "SiteStats", "bootstrap_site", "correlate",
    "pearson_p", "pearson_r", "phenotype_stats",
    "SynthConfig", "generate", "generate_size_quality_study",
    "FeatureTable", "PhenotypeRecord", "ScanParamsRecord", "TableFormatError",
    "apply_mask", "load_feature_table", "load_phenotypes", "load_scan_params",
    "partition_by_site", "save_feature_table",
]
