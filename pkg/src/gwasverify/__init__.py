"""Privacy-preserving verification of case-control association statistics."""

from .errors import GwasVerifyError
from .genotype import CaseControlDataset, SynthesisConfig, load_dataset, synthesize_dataset, write_dataset
from .gwas import GwasTable, SnpStatistics, compute_statistics, contingency_table, rank_snps, run_gwas
from .ldp import PartialNoisyDataset, build_partial_noisy_dataset, estimate_counts, rr_probabilities
from .metadata import ErrorScenario, MetadataBundle, build_metadata, inject_errors
from .verifier import CutoffSet, VerificationReport, calibrate_cutoffs, expected_deviation, verify_bundle

__version__ = "0.1.0"

__all__ = [
    "CaseControlDataset",
    "CutoffSet",
    "ErrorScenario",
    "GwasTable",
    "GwasVerifyError",
    "MetadataBundle",
    "PartialNoisyDataset",
    "SnpStatistics",
    "SynthesisConfig",
    "VerificationReport",
    "build_metadata",
    "build_partial_noisy_dataset",
    "calibrate_cutoffs",
    "compute_statistics",
    "contingency_table",
    "estimate_counts",
    "expected_deviation",
    "inject_errors",
    "load_dataset",
    "rank_snps",
    "rr_probabilities",
    "run_gwas",
    "synthesize_dataset",
    "verify_bundle",
    "write_dataset",
]
