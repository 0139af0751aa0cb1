"""
MultiFC: f_psi = grad * FCs(W)
"""

from metaquant.lib.autodiff import functional as F

from .base import HyperNetDesign, fc_stack, init_fc_stack

# final layer starts near zero with bias 1 so FCs(.) ~ 1
FINAL_STD = 0.01


class MultiFC(HyperNetDesign):
    """Gradient scaled by an FC stack applied to the weight"""

    name = "multifc"
    description = "grad * FCs(W), FC stack 1 -> H -> 1"
    default_fc_layers = 2

    def init_params(self, rng):
        widths = [1] + [self.hidden] * (self.fc_layers - 1) + [1]
        return init_fc_stack(rng, "fc", widths, final_bias=1.0, final_std=FINAL_STD)

    def calibrate(self, pair, grad, params, state):
        return F.mul(grad, fc_stack(pair.weight, params, "fc", self.fc_layers))
