"""Mining and analysing learner questions from lecture-video comments."""

__version__ = "0.1.0"
