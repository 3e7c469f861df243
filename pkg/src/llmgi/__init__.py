"""Genetic improvement with objective-tailored LLM mutations.

Kept import-free: the evaluation driver (``python -m llmgi.call``) runs in
every child process, so nothing heavy may load here.
"""

__version__ = "0.1.0"
