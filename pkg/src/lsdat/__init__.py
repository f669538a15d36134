"""Decision-based black-box attack on the sparse component of a low-rank plus sparse split."""

from .attack import (AttackOutcome, AttackParams, Candidate, attack_single, attack_with_exploration,
                     blend, clip_to_valid, traversal_steps)
from .constraints import L0, L2, Linf, Norms, make_constraint, measure, project
from .dictionary import DictionaryEntry, HierarchicalDictionary
from .oracle import (CentroidOracle, LinearOracle, Oracle, OracleError, QueryCounter, RemoteOracle,
                     ReplayOracle, make_centroid_oracle, make_linear_oracle, make_remote_oracle)
from .rpca import LSDPair, RpcaConfig, decompose, decompose_image

__version__ = "0.1.0"
