"""decorrlab: learn and analyze representations decorrelated from sensitive attributes.

The package covers three layers:

* closed-form theory for two-component Gaussian mixtures (optimal noise
  allocation via water-filling and the resulting detection-probability
  frontier),
* a data-driven trainer that pits a randomizing encoder against a neural
  adversary in a distortion-constrained minimax game (penalty or augmented
  Lagrangian constraint handling, optional task-aware and fair-classifier
  modes), and
* evaluation: MAP-oracle detection accuracy, demographic-parity and
  equalized-odds gaps, k-NN mutual-information certification, and local
  differential-privacy baselines for context-free noise.
"""

__version__ = "0.1.0"
