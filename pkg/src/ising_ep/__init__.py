"""Equilibrium Propagation on a software Ising machine.

Submodules: ``ising`` (problems, energies, brute force), ``annealer``
(Metropolis simulated/reverse annealing), ``topology`` (Chimera graphs and
embeddings), ``networks`` (architectures as Ising problems, checkpoints),
``eqprop`` (training loop), ``deterministic`` (binary-activation reference),
``data`` (MNIST IDX and the 3x3 patterns), ``config`` and ``cli``.
"""

__version__ = "0.1.0"
