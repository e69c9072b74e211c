"""weightlab: numerical and symbolic checks for weighted norm inequalities.

Dyadic-grid Muckenhoupt constants, discrete maximal/Hilbert operators,
constructive majorant iterations, and an exact-rational regularity
calculus with derivation replay.
"""

from .calculus import (
    BoundExpr,
    DerivationTrace,
    Generator,
    LatticeExpr,
    RegularityFact,
    apply_rule,
    convexity,
    dual,
    gen_expr,
    interp_norm_bound,
    lebesgue,
    main_chain_exponents,
    normalize,
    power,
    product,
    replay,
)
from .grid import Grid, Interval, average, make_grid
from .majorants import (
    ChainReport,
    MajorantResult,
    a2_majorant,
    ambient_weight,
    chain_a1apt,
    chain_a2rdiv,
    rdf_majorant,
    restricted_majorant,
)
from .operators import (
    DiscreteOperator,
    NondegReport,
    WeightedNormReport,
    hilbert,
    maximal,
    maximal_norm_lp,
    nondegeneracy_constant,
    op_norm_lp,
    op_norm_weighted,
    verify_shift_ap2,
)
from .weights import (
    ConstantsReport,
    Weight,
    ap_constant,
    constants_report,
    doubling_constant,
    f_class_constant,
    fujii_wilson,
    reverse_holder,
    rh_exponent,
    weight_from_dsl,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
