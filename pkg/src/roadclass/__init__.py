"""Road-class datasets from OSM road polylines and satellite tiles.

Covers georeferencing, highway-tag ingestion, Bresenham road masks with disk
dilation, occlusion variants, manifests, metrics, a linear baseline
classifier trained with Adam, a synthetic tile generator, and the
masking / binarization / cross-domain experiment harnesses.
"""

__version__ = "0.1.0"
