"""drumcritic: interactive drum-loop generation steered by a per-user
learned audio critic over a two-phase like/dislike rating protocol."""

__version__ = "0.1.0"
