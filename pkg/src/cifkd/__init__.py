"""CIF speech recognition with teacher-embedding distillation, numpy only."""

__version__ = "0.1.0"
