from .experiment import ResultBundle, bucket_means, count_inversions, export_results, run_experiment
from .scenario import (Cohort, GameConfig, Scenario, generate_paper_scenario, load_scenario,
                       save_scenario)

__all__ = ["Cohort", "GameConfig", "ResultBundle", "Scenario", "bucket_means", "count_inversions",
           "export_results", "generate_paper_scenario", "load_scenario", "run_experiment",
           "save_scenario"]
