from .grids import load_density_grid, write_density_grid
from .trees import load_tree, parse_document

__ALL__ = [load_tree, parse_document, load_density_grid, write_density_grid]
