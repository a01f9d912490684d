"""The CRF layer on a problem small enough to check by hand.

Three tokens and two labels give 2**3 = 8 label paths. The forward algorithm
and Viterbi should agree with simply scoring all of them.
"""

import itertools

import numpy as np

from onconer.crf import forward_logZ, path_score, viterbi_decode

rng = np.random.default_rng(0)
T, K = 3, 2
emissions = rng.normal(size=(T, K))
transitions = rng.normal(size=(K + 2, K + 2))  # rows/cols K and K+1 are START and STOP

scores = {}
for path in itertools.product(range(K), repeat=T):
    scores[path] = path_score(emissions, transitions, list(path)).item()
    print("path", path, f"score {scores[path]:+.4f}")

brute = np.log(np.sum(np.exp(list(scores.values()))))
print(f"\nlog Z by enumeration  {brute:.12f}")
print(f"log Z by forward pass {forward_logZ(emissions, transitions).item():.12f}")

best, best_score = viterbi_decode(emissions, transitions)
print(f"\nViterbi path {tuple(best)} score {best_score:+.4f}")
print(f"best by enumeration {max(scores, key=scores.get)}")
