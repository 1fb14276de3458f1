"""Race-timing toolchain: model, textual language, compiler, replay runtime."""

__version__ = "0.1.0"
