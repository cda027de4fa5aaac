"""Numerical learning: tabular Q-learning, hindsight relabeling, manual-gradient networks, curiosity, reward machines."""
