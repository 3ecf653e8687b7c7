#pragma once

#include "dctx/autodiff.hpp"
#include "dctx/optim.hpp"

#include <utility>

namespace dctx {

/// Parameter bundle for one recurrent cell, pulled onto a tape per step.
struct CellVars {
  Var wx;  // in_dim x gates*hidden
  Var wh;  // hidden x gates*hidden
  Var b;   // 1 x gates*hidden
};

/// Registers LSTM parameters "<prefix>.wx/.wh/.b" (gate order i,f,o,g).
/// Forget-gate bias starts at +1.
void add_lstm_params(ParamSet& ps, const std::string& prefix, long in_dim,
                     long hidden);
/// Registers GRU parameters "<prefix>.wx/.wh/.b" (gate order z,r,n).
void add_gru_params(ParamSet& ps, const std::string& prefix, long in_dim,
                    long hidden);

CellVars cell_vars(Tape& t, ParamSet& ps, const std::string& prefix);

/// Standard LSTM step. x is 1 x in_dim; h_prev/c_prev are 1 x hidden.
std::pair<Var, Var> lstm_cell(Tape& t, Var x, Var h_prev, Var c_prev,
                              const CellVars& p);

/// GRU step with h = z*candidate + (1-z)*h_prev, so a saturated update gate
/// hands the state to the candidate.
Var gru_cell(Tape& t, Var x, Var h_prev, const CellVars& p);

}  // namespace dctx
