"""Multi-echelon warehouse ordering: exact simulator, baselines and a PPO product agent."""

__version__ = "0.1.0"
