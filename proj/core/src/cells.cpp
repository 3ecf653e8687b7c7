#include "dctx/cells.hpp"

namespace dctx {

void add_lstm_params(ParamSet& ps, const std::string& prefix, long in_dim,
                     long hidden) {
  ps.add_weight(prefix + ".wx", in_dim, 4 * hidden);
  ps.add_weight(prefix + ".wh", hidden, 4 * hidden);
  Param& b = ps.add_zeros(prefix + ".b", 1, 4 * hidden);
  b.value.middleCols(hidden, hidden).setOnes();  // forget gate
}

void add_gru_params(ParamSet& ps, const std::string& prefix, long in_dim,
                    long hidden) {
  ps.add_weight(prefix + ".wx", in_dim, 3 * hidden);
  ps.add_weight(prefix + ".wh", hidden, 3 * hidden);
  ps.add_zeros(prefix + ".b", 1, 3 * hidden);
}

CellVars cell_vars(Tape& t, ParamSet& ps, const std::string& prefix) {
  return CellVars{t.param(ps.at(prefix + ".wx")),
                  t.param(ps.at(prefix + ".wh")),
                  t.param(ps.at(prefix + ".b"))};
}

std::pair<Var, Var> lstm_cell(Tape& t, Var x, Var h_prev, Var c_prev,
                              const CellVars& p) {
  long hidden = p.wh.rows();
  Var pre = t.add(t.add(t.matmul(x, p.wx), t.matmul(h_prev, p.wh)), p.b);
  Var i = t.sigmoid_(t.cols(pre, 0, static_cast<int>(hidden)));
  Var f = t.sigmoid_(t.cols(pre, static_cast<int>(hidden),
                            static_cast<int>(hidden)));
  Var o = t.sigmoid_(t.cols(pre, static_cast<int>(2 * hidden),
                            static_cast<int>(hidden)));
  Var cand = t.tanh_(t.cols(pre, static_cast<int>(3 * hidden),
                            static_cast<int>(hidden)));
  Var c = t.add(t.mul(f, c_prev), t.mul(i, cand));
  Var h = t.mul(o, t.tanh_(c));
  return {h, c};
}

Var gru_cell(Tape& t, Var x, Var h_prev, const CellVars& p) {
  long hidden = p.wh.rows();
  int hi = static_cast<int>(hidden);
  Var xg = t.matmul(x, p.wx);
  Var hg = t.matmul(h_prev, p.wh);
  Var bz = t.cols(p.b, 0, hi);
  Var br = t.cols(p.b, hi, hi);
  Var bn = t.cols(p.b, 2 * hi, hi);
  Var z = t.sigmoid_(t.add(t.add(t.cols(xg, 0, hi), t.cols(hg, 0, hi)), bz));
  Var r = t.sigmoid_(t.add(t.add(t.cols(xg, hi, hi), t.cols(hg, hi, hi)), br));
  Var n = t.tanh_(t.add(
      t.add(t.cols(xg, 2 * hi, hi), t.mul(r, t.cols(hg, 2 * hi, hi))), bn));
  return t.add(t.mul(z, n), t.mul(t.one_minus(z), h_prev));
}

}  // namespace dctx
