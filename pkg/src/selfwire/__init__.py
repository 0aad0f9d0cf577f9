"""Self-wiring composition of question-answering pipelines.

A registry of typed web modules, a lightweight class-expression reasoner
that decides which module can feed which, a search that enumerates every
complete Question-to-Answer pipeline, and an executor that runs a pipeline
against live (or mock) HTTP modules.
"""

__version__ = "0.1.0"
