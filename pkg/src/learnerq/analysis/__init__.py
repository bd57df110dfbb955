from .engagement import DistributionRow, EngagementRow, bt_distribution, engagement_rates
from .metrics import ClassScores, MetricsReport, binary_metrics, classification_metrics
from .pmi import PMIEntry, VerbOccurrence, pmi_table, top_verbs, verb_occurrences
from .verbs import LexiconTagger, extract_verbs

__all__ = [
    "ClassScores",
    "DistributionRow",
    "EngagementRow",
    "LexiconTagger",
    "MetricsReport",
    "PMIEntry",
    "VerbOccurrence",
    "binary_metrics",
    "bt_distribution",
    "classification_metrics",
    "engagement_rates",
    "extract_verbs",
    "pmi_table",
    "top_verbs",
    "verb_occurrences",
]
