"""Skip-gram word vectors and PAC-Bayes sentence vectors.

Subpackages cover the full pipeline: corpus statistics, the source-task
Skip-gram trainer (compiled kernel with a pure-NumPy fallback), closed-form
sentence-vector estimators, iterative posterior training, PAC-Bayes bound
machinery, and a downstream classification harness.
"""

__version__ = "0.1.0"
