"""Personalized federated learning with similarity-graph fusion.

Per-client models share a common block and keep a personalized block whose
columns are pulled together along the edges of a client-similarity network.
Clients can trade extra local compute for updates whose entries cluster
into few values; the codec measures the resulting bytes on the wire.
"""

from .client import (
    CerConfig,
    CerWorkspace,
    DifferenceOperator,
    LocalDataset,
    cer_objective,
    cer_update,
    local_gradient,
    local_loss,
)
from .codec import (
    ClusteredUpdate,
    CodecError,
    cluster_quantize,
    decode,
    encode,
    encoded_nbytes,
    reconstruct,
    size_report,
)
from .graph import (
    SimilarityNetwork,
    SketchVector,
    build_knn_graph,
    compute_sketch,
    incidence_matrix,
    network_from_json,
    network_to_json,
)
from .harness import (
    ClientData,
    FederationSpec,
    RoundMetrics,
    TrainConfig,
    consensus_gap,
    evaluate,
    generate_federation,
    train,
    training_objective,
)
from .partition import (
    ModelPartition,
    compose,
    compose_columns,
    project_personal,
    project_shared,
)
from .server import (
    AdmmZState,
    FederatedState,
    ServerHyper,
    group_prox,
    l1p_norm,
    omega_step,
    update_personalized,
    update_shared,
    w_step,
    z_objective,
    z_step,
)

__version__ = "0.1.0"
