"""Compressive learning of semi-parametric models from sketched statistics."""

from .decode import DecodeOptions, DiagonalizableTensor, contrast_off_diagonal, decode_ica, decode_low_rank
from .models import amari_index, clustering_error, gpca_cluster, gpca_polynomials, ica_extract, pca_extract
from .sketch import SketchOperator, SketchVector, apply, apply_adjoint, make_operator, sketch_stream
from .statistics import (
    MomentAccumulator,
    Whitener,
    accumulate,
    finalize_correlation,
    finalize_cumulant,
    fit_whitener,
    merge,
    veronese_dim,
    veronese_embed,
)

__version__ = "0.1.0"
