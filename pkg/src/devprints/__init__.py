"""Developer fingerprints from IDE event logs.

Modules: ``eventlog`` (parsing and recoding), ``ngram`` (language models and
cross-entropy), ``topics`` (LDA and topic-count selection), ``process``
(directly-follows nets and conformance), ``stats`` (group comparisons),
``synth`` (seeded synthetic data) and ``cli``.
"""

__version__ = "0.1.0"
