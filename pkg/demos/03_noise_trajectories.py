"""Depolarizing noise as stochastic Pauli trajectories.

Each trajectory leaves the state alone with probability 1 - p and applies
X, Y or Z with probability p/3 each. Averaging many trajectories
reproduces the mixed-state channel; at p = 3/4 a basis state becomes
maximally mixed.
"""
import numpy as np

from qpolicy import NoiseModel, StateVector, apply_depolarizing, measure

zero = StateVector(np.array([1.0, 0.0], dtype=complex), num_qubits=1)

for p in (0.25, 0.75, 1.0):
    trials = 40_000
    prob_one = 0.0
    for seed in range(trials):
        out = apply_depolarizing(zero, p, qubit=0, seed=seed)
        prob_one += abs(out.amplitudes[1]) ** 2
    # channel arithmetic: Pr(1) = 2p/3 for a |0> input
    print(f"p = {p:4}: trajectory Pr(1) = {prob_one / trials:.4f}, "
          f"channel value = {2 * p / 3:.4f}")

# the measurement path applies the same per-qubit cycle before each shot
hist = measure(zero, shots=100_000, noise=NoiseModel(0.75), seed=0)
print(f"\nnoisy measurement of |0> at p = 0.75: "
      f"{ {k: v / hist.shots for k, v in sorted(hist.counts.items())} }")
print("both outcomes approach 1/2, the maximally mixed point")
