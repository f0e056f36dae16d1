"""Federated LoRA fine-tuning with pruned, CKKS-encrypted update aggregation.

Subpackages: ckks (homomorphic aggregation core), lora (adapter training),
pruning (dynamic L1 sparsification), fed (orchestration), attack (gradient
inversion harness), cli (command line).
"""

__version__ = "0.1.0"
