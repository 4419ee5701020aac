"""gridlay: topology-preserving integer-grid layouts for graphs and point
clouds, with CNN-ready feature-grid export."""

__version__ = "0.1.0"

from .graph import (
    DatasetError,
    DistanceMatrix,
    Graph,
    connected_components,
    load_edge_list,
    load_json_graph,
    load_tu_dataset,
    save_json_graph,
    shortest_path_distances,
)
from .layout import (
    ContinuousLayout,
    GridLayout,
    LayoutConfig,
    OptimizationError,
    gpgl,
    gpgl_pipeline,
    gpgl_gradient,
    init_layout,
    kk_energy,
    minimize,
    separation_penalty,
    vertex_loss_ratio,
)
from .hierarchy import (
    GridCapacityError,
    HierarchyConfig,
    Partition,
    PartitionNode,
    PartitionTree,
    connectivity_graph,
    fit_into_grid,
    hgpgl,
    normalized_cut,
)
from .export import (
    ExportConfig,
    FeatureGrid,
    GridOverflowError,
    augment,
    export_npy,
    read_feature_grid,
    read_npy,
    to_feature_grid,
)
from .pointcloud import (
    PointCloud,
    PointCloudError,
    delaunay_graph,
    knn_graph,
    load_xyz,
    load_xyz_binary,
    save_xyz,
    save_xyz_binary,
)

__all__ = [name for name in dir() if not name.startswith("_")]
