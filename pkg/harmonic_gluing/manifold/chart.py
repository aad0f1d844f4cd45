from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .base import TargetModel, register_model
from .sphere import conformal_christoffel, conformal_metric

MetricTable = Callable[[np.ndarray], np.ndarray]

_CHRISTOFFEL_TABLES: Dict[str, Callable[..., Tuple[MetricTable, MetricTable]]] = {}


def register_christoffel_table(name: str):
    def decorator(factory):
        _CHRISTOFFEL_TABLES[name] = factory
        return factory

    return decorator


def christoffel_table(name: str, **params) -> Tuple[MetricTable, MetricTable]:
    if name not in _CHRISTOFFEL_TABLES:
        raise KeyError(
            f"Unknown Christoffel table '{name}'. "
            f"Available tables: {sorted(_CHRISTOFFEL_TABLES)}"
        )
    return _CHRISTOFFEL_TABLES[name](**params)


@register_christoffel_table("round-sphere")
def _round_sphere_table(radius: float = 1.0):
    return (
        lambda y: conformal_metric(y, radius),
        lambda y: conformal_christoffel(y, radius),
    )


@register_christoffel_table("flat")
def _flat_table():
    def metric(y):
        m, n = np.atleast_2d(y).shape
        return np.broadcast_to(np.eye(n), (m, n, n)).copy()

    def christoffel(y):
        m, n = np.atleast_2d(y).shape
        return np.zeros((m, n, n, n))

    return metric, christoffel


@register_model("chart")
class ChartModel(TargetModel):
    """A target given by a single chart and user-supplied evaluators.

    Geodesics and transport are integrated with the RK4 scheme of
    [`TargetModel.geodesic_ode`][harmonic_gluing.manifold.base.TargetModel.geodesic_ode],
    the logarithm is computed by shooting, and the curvature by centered differences of
    the Christoffel symbols. Integration that leaves the declared coordinate box raises
    `ChartEscape`.

    Arguments:
        dimension (int): Dimension `n`.
        injectivity_bound (float): Required; no value is guessed for a generic chart.
        table (str): Name of a built-in Christoffel table, e.g. `"round-sphere"`.
        table_params (Optional[dict]): Parameters of the table.
        box (float): Half width of the coordinate box `[-box, box]ⁿ`.
        metric_fn (Optional[MetricTable]): Custom metric evaluator, overrides `table`.
        christoffel_fn (Optional[MetricTable]): Custom Christoffel evaluator.
    """

    def __init__(
        self,
        dimension: int = 2,
        injectivity_bound: float = None,
        table: str = "flat",
        table_params: Optional[dict] = None,
        box: float = 5.0,
        metric_fn: Optional[MetricTable] = None,
        christoffel_fn: Optional[MetricTable] = None,
        **kwargs,
    ) -> None:
        assert (
            injectivity_bound is not None
        ), "Chart models need an explicit injectivity bound"
        super().__init__(dimension, injectivity_bound, **kwargs)
        self.table = table
        self.table_params = dict(table_params or {})
        self.box = float(box)
        if metric_fn is None or christoffel_fn is None:
            metric_fn, christoffel_fn = christoffel_table(table, **self.table_params)
        self._metric_fn = metric_fn
        self._christoffel_fn = christoffel_fn

    def descriptor(self) -> dict:
        return {
            **super().descriptor(),
            "table": self.table,
            "table_params": self.table_params,
            "box": self.box,
        }

    @property
    def chart_boxes(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        half = np.full(self.dimension, self.box)
        return [(-half, half)]

    def metric(self, coords, charts):
        return self._metric_fn(np.atleast_2d(coords))

    def christoffel(self, coords, charts):
        return self._christoffel_fn(np.atleast_2d(coords))
