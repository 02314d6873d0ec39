"""Associative-memory-augmented report generation on a desk-scale stand-in:
modern Hopfield retrieval over a disease-tagged visual bank and a report
memory, with the classifier, RoI masking and metrics around it."""
from .errors import (AmmrgError, ConfigError, DimensionError, EmptyMemoryError, FormatError,
                     NumericError)
from .hopfield import (HopfieldConfig, HopfieldProjections, PatternMatrix, RetrievalResult,
                       association_weights, batch_enhance, dual_retrieve, energy, energy_gradient,
                       hopfield_apply, retrieve, retrieve_batch, update_step)
from .memory_bank import (ReportMemory, ReportMemoryEntry, VisualBank, VisualBankEntry,
                          build_report_memory, build_visual_bank, largest_remainder, load_bank,
                          save_bank)
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"
