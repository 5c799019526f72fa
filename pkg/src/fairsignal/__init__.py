"""Fair traffic-signal control: point-queue intersection simulator, DDQN agents and fairness metrics."""

__version__ = "0.1.0"
