"""
Modular cross-lingual voice conversion pipeline.

A shared language-independent trunk with language-specific output heads maps
phonetic posteriorgrams plus a speaker embedding to acoustic frames.
"""

__version__ = "0.1.0"
