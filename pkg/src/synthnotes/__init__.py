"""synthnotes: train language models on a private note corpus, generate a
synthetic corpus, audit leave-one-out privacy leakage, and benchmark the
synthetic text's downstream utility."""

__version__ = "0.1.0"
