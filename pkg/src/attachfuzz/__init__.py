"""Coverage-guided fuzzing of a simulated 4G-style attach procedure.

The package is organized around a small pipeline:

* :mod:`attachfuzz.packets`     -- bit-exact field extraction/insertion
* :mod:`attachfuzz.dissect`     -- byte sequences -> typed packets with fields
* :mod:`attachfuzz.mutation`    -- mutators, patches, seeds, replay buffer
* :mod:`attachfuzz.probability` -- per-field mutation probabilities + feedback update
* :mod:`attachfuzz.coverage`    -- edge-hit bucketing and cumulative coverage
* :mod:`attachfuzz.fuzzers`     -- no-fuzz / random / coverage-guided strategies
* :mod:`attachfuzz.simulator`   -- the instrumented UE/ENB machines and the
  per-iteration controller loop
* :mod:`attachfuzz.campaign`    -- multi-set campaign orchestration, CSV output,
  crash reproduction
"""

from attachfuzz.packets import Channel, Direction, Field, Layer, Packet

__all__ = ["Channel", "Direction", "Field", "Layer", "Packet"]
