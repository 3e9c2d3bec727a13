"""SmartPilot: multiagent copilot runtime for manufacturing lines.

Agents:
    predictx  - multimodal anomaly prediction (time series + image features)
    foresight - next-period production forecasting with feature infusion
    infoguide - manual-grounded Q&A with hybrid retrieval and refusal

Supporting layers: a small differentiable kernel (dense/LSTM/losses/optimizers),
a process-ontology store with a range penalty for knowledge-infused training,
deterministic synthetic data generators, and a message-bus runtime with a
tag-stream ingester and REST/websocket serving layer.
"""

__version__ = "0.1.0"
