"""
LSTMFC: f_psi = grad * FCs(LSTM(W))
"""

import collections

from metaquant.lib.autodiff import functional as F

from .base import HyperNetDesign, fc_stack, init_fc_stack, init_lstm_cell, lstm_cell

FINAL_STD = 0.01
CELL_GAIN = 0.1


class LSTMFC(HyperNetDesign):
    """Gradient scaled by an LSTM cell + FC head over the weight"""

    name = "lstmfc"
    description = "grad * FCs(LSTM(W)), one cell step per coordinate"
    recurrent = True
    in_features = 1

    def init_params(self, rng):
        params = collections.OrderedDict()
        params.update(init_lstm_cell(rng, "lstm", self.in_features, self.hidden, CELL_GAIN))
        widths = [self.hidden] * self.fc_layers + [1]
        params.update(init_fc_stack(rng, "fc", widths, final_bias=1.0, final_std=FINAL_STD))
        return params

    def calibrate(self, pair, grad, params, state):
        hidden, cell = lstm_cell(pair.weight, params, "lstm", self.hidden, state)
        state.update(hidden, cell)
        return F.mul(grad, fc_stack(hidden, params, "fc", self.fc_layers))
