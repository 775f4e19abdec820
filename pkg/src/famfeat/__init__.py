"""EEG familiarity-response feature pipeline.

Core subpackages: ``preprocess`` (filtering, artifact removal, epoching),
``features`` (the five per-epoch feature families), ``selection`` (the
three-stage cascade), ``classify`` (Gaussian-kernel SVM and evaluation),
``synth`` (seeded synthetic data) and ``pipeline`` (stage orchestration).
The FastAPI service in ``famfeat.service`` exposes each stage over HTTP;
the ``famfeat`` CLI is a thin client of that service.
"""

__version__ = "0.1.0"
