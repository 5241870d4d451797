from ssfcodec.entropy.quantization import quantize, quantize_train, quantize_test
from ssfcodec.entropy.models import (
    GaussianConditional, FactorizedPrior, gaussian_likelihood, factorized_likelihood, get_scale_table, rate_bits
)
from ssfcodec.entropy.cdf_tables import CdfTable, build_cdf_tables, estimate_bits
from ssfcodec.entropy.range_coder import range_encode, range_decode
