"""Knowledge concentration: many specialist teachers distilled into one student."""

__version__ = "1.0.0"
