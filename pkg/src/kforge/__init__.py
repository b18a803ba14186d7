"""kforge: knowledge-centric multimodal corpus construction toolkit."""

__version__ = "0.1.0"
