"""termweave: terminology-controlled machine translation pipeline and
evaluation toolkit.

Builds glossary-augmented translation prompts via deterministic term
retrieval, dispatches them to pluggable backends with caching, audits
outputs for exact-match terminology compliance, and runs the paired
statistics (bootstrap CIs, Wilcoxon signed-rank, exact McNemar) behind
the report tables.
"""

__version__ = "0.1.0"
