"""Dialectal variety identification: corpus tools, TextCat, subword embeddings, SVM and neural classifiers."""

__version__ = "0.1.0"
