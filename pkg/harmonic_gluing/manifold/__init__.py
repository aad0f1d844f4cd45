from .audit import geometry_audit, random_points, random_vectors
from .base import (
    GeodesicSolution,
    TangentVector,
    TargetModel,
    TargetPoint,
    TransportDerivative,
    get_model,
    register_model,
    registered_models,
)
from .chart import ChartModel, christoffel_table, register_christoffel_table
from .loading import load_model, model_from_descriptor
from .sphere import RoundSphere
from .torus import FlatTorus
