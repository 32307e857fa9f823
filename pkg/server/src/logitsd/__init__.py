"""logitsd: neural language models behind the logits wire protocol."""

__version__ = "0.1.0"
