"""ibert: bidirectional transformer encoder with a recurrent bottom layer,
plus number-sequence and masked-LM length-generalization benchmarks."""

__version__ = "0.1.0"
