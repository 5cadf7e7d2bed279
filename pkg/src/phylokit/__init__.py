"""phylokit: reconstruct image phylogeny trees from near-duplicate sets.

Basis-function fits model the transformation between image pairs in both
directions; a likelihood ratio over trained parameter densities scores
which direction is more plausible; thresholding, root ranking and
depth-first spanning turn the pairwise scores into candidate trees.
"""

__version__ = "0.1.0"

from .basisfit import (FAMILIES, FAMILY_DIMS, IceSettings, ParamVector,
                       eval_poly, fit_blockwise, fit_ice, gabor_bank,
                       model_pair, poly_design, rbf_kernel)
from .evalmetrics import (EvalReport, aggregate, entropy_bounds,
                          entropy_delta, evaluate_trial, ipt_accuracy,
                          root_rank_hit, von_neumann_entropy)
from .imageops import (apply_geometric, apply_photometric, apply_transform,
                       imread, imwrite, load_manifest, normalize_unit,
                       quantize, sample_spec, synth_ipt, tessellate,
                       tree_shape, write_dataset)
from .likelihood import (DensityModel, eval_density, fit_parzen,
                         likelihood_ratio, load_model, save_model,
                         silverman_bandwidth, train_model)
from .phylogeny import (PhylogenyTree, Reconstruction, indicator_matrix,
                        load_recon, reconstruct, root_candidates, save_recon,
                        similarity_matrix, span_ipt, to_dot)
