"""Amplitude encoding, measurement histograms, and the index-expectation proxy.

A table row is shifted to be nonnegative, packed into state amplitudes
(padded to a power of two), and read back by sampling. The expectation of
the measured index serves as a scalar readout proxy.
"""
import numpy as np

from qpolicy import amplitude_encode, expected_index, measure, shift_for_encoding
from qpolicy.emulator import decode_amplitudes

# the canonical uniform example: all four amplitudes equal
state, scale, pad = amplitude_encode([0.5, 0.5, 0.5, 0.5])
print(f"uniform vector -> {state.num_qubits}-qubit state, amplitudes "
      f"{np.real(state.amplitudes)}")
hist = measure(state, shots=512, seed=1)
print(f"512 shots: {hist.to_json_dict()}")
print(f"index expectation {expected_index(hist):.3f} (exact distribution gives 1.5)")

# a value row with negative entries: shift, encode, decode round trip
row = np.array([-0.4, 0.1, 0.9])
shifted, offset = shift_for_encoding(row)
state, scale, pad = amplitude_encode(shifted)
print(f"\nrow {row} shifts by {offset}, pads {pad} zero(s), scale {scale:.4f}")
decoded = decode_amplitudes(state, scale, offset, len(row))
print(f"decoded row: {decoded} (max error {np.abs(decoded - row).max():.1e})")

# sampling converges to the squared amplitudes
probs = np.abs(state.amplitudes) ** 2
big = measure(state, shots=200_000, seed=2)
freqs = [big.counts.get(i, 0) / big.shots for i in range(4)]
print(f"\nempirical frequencies {np.round(freqs, 4)}")
print(f"squared amplitudes    {np.round(probs, 4)}")
