"""nerkit: named-entity recognition with token, CRF, and span heads over a
shared embedding interface, plus set combiners and a learned prediction
filter."""

__version__ = "0.1.0"
