"""
DualLSTMFC: f_psi = FCs(LSTM([W, grad]))

Weight and gradient enter the cell together, so unlike the multiplicative
designs a zero gradient does not force a zero output.
"""

import collections

from metaquant.lib.autodiff import functional as F

from .base import HyperNetDesign, fc_stack, init_fc_stack, init_lstm_cell, lstm_cell

GAIN = 0.1


class DualLSTMFC(HyperNetDesign):
    """LSTM cell over the concatenated (weight, gradient) pair"""

    name = "duallstmfc"
    description = "FCs(LSTM([W, grad])), input feature size 2"
    recurrent = True
    in_features = 2

    def init_params(self, rng):
        params = collections.OrderedDict()
        params.update(init_lstm_cell(rng, "lstm", self.in_features, self.hidden, GAIN))
        widths = [self.hidden] * self.fc_layers + [1]
        params.update(
            init_fc_stack(
                rng,
                "fc",
                widths,
                final_bias=0.0,
                final_std=GAIN / widths[-2] ** 0.5,
                gain=GAIN,
            )
        )
        return params

    def calibrate(self, pair, grad, params, state):
        joined = F.concat([pair.weight, grad], axis=-1)
        hidden, cell = lstm_cell(joined, params, "lstm", self.hidden, state)
        state.update(hidden, cell)
        return fc_stack(hidden, params, "fc", self.fc_layers)
