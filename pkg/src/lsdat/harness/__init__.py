from .campaign import (CampaignConfig, CampaignReport, DecompositionCache, ReportRow, dictionary_stats,
                       run_campaign, sweep_l0)
from .dataset import DatasetManifest, Sample, load_dataset, save_dataset
from .report import emit_report, load_report
from .synthetic import SyntheticBenchmark, make_benchmark
