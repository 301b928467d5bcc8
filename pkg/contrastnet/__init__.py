"""Few-shot text classification through supervised and task/instance-level contrastive learning."""

__version__ = "0.1.0"
