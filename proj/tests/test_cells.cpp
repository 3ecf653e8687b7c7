#include <doctest.h>

#include "dctx/cells.hpp"
#include "dctx/gradcheck.hpp"

using namespace dctx;

namespace {

double lstm_loss(ParamSet& ps, const Mat& x1, const Mat& x2, bool backward) {
  Tape t;
  CellVars cv = cell_vars(t, ps, "lstm");
  Var h = t.constant(Mat::Zero(1, 6));
  Var c = t.constant(Mat::Zero(1, 6));
  auto s1 = lstm_cell(t, t.constant(x1), h, c, cv);
  auto s2 = lstm_cell(t, t.constant(x2), s1.first, s1.second, cv);
  Var loss = t.sum(t.mul(s2.first, s2.first));
  if (backward) t.backward(loss);
  return loss.val()(0, 0);
}

double gru_loss(ParamSet& ps, const Mat& x1, const Mat& x2, bool backward) {
  Tape t;
  CellVars cv = cell_vars(t, ps, "gru");
  Var h = t.constant(Mat::Zero(1, 6));
  Var h1 = gru_cell(t, t.constant(x1), h, cv);
  Var h2 = gru_cell(t, t.constant(x2), h1, cv);
  Var loss = t.sum(t.mul(h2, h2));
  if (backward) t.backward(loss);
  return loss.val()(0, 0);
}

}  // namespace

TEST_CASE("lstm forget-gate bias starts at one") {
  ParamSet ps(3);
  add_lstm_params(ps, "lstm", 4, 6);
  const Mat& b = ps.at("lstm.b").value;
  // gate order i,f,o,g: columns [6,12) hold the forget-gate bias
  for (int j = 0; j < 24; ++j)
    CHECK(b(0, j) == (j >= 6 && j < 12 ? 1.0 : 0.0));
}

TEST_CASE("lstm shapes and two-step gradient check") {
  ParamSet ps(11);
  add_lstm_params(ps, "lstm", 4, 6);
  Mat x1 = Mat::Random(1, 4), x2 = Mat::Random(1, 4);
  ps.zero_grads();
  lstm_loss(ps, x1, x2, true);
  auto res = finite_diff_check(
      [&](ParamSet& p) { return lstm_loss(p, x1, x2, false); }, ps, 120, 1e-5);
  CHECK(res.coords_checked >= 100);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gru two-step gradient check") {
  ParamSet ps(13);
  add_gru_params(ps, "gru", 4, 6);
  Mat x1 = Mat::Random(1, 4), x2 = Mat::Random(1, 4);
  ps.zero_grads();
  gru_loss(ps, x1, x2, true);
  auto res = finite_diff_check(
      [&](ParamSet& p) { return gru_loss(p, x1, x2, false); }, ps, 120, 1e-5);
  CHECK(res.coords_checked >= 100);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("gru saturated update gate hands the state to the candidate") {
  // Zero wx/wh with a huge update-gate bias: z ~= 1, so h = tanh-candidate.
  ParamSet ps(0);
  int d = 3;
  ps.add_zeros("gru.wx", 2, 3 * d);
  ps.add_zeros("gru.wh", d, 3 * d);
  Param& b = ps.add_zeros("gru.b", 1, 3 * d);
  for (int j = 0; j < d; ++j) b.value(0, j) = 50.0;  // z gate
  // candidate bias: tanh(0.7)
  for (int j = 2 * d; j < 3 * d; ++j) b.value(0, j) = 0.7;
  Tape t;
  CellVars cv = cell_vars(t, ps, "gru");
  Mat h_prev = Mat::Constant(1, d, -0.9);
  Var h = gru_cell(t, t.constant(Mat::Zero(1, 2)), t.constant(h_prev), cv);
  for (int j = 0; j < d; ++j)
    CHECK(h.val()(0, j) == doctest::Approx(std::tanh(0.7)).epsilon(1e-6));
}

TEST_CASE("lstm with zero state and zero input stays near zero") {
  ParamSet ps(5);
  add_lstm_params(ps, "lstm", 4, 6);
  Tape t;
  CellVars cv = cell_vars(t, ps, "lstm");
  auto hc = lstm_cell(t, t.constant(Mat::Zero(1, 4)),
                      t.constant(Mat::Zero(1, 6)), t.constant(Mat::Zero(1, 6)),
                      cv);
  // gates see only biases: i=0.5, g=tanh(0)=0 -> c=0, h=0
  CHECK(hc.first.val().norm() == doctest::Approx(0.0));
  CHECK(hc.second.val().norm() == doctest::Approx(0.0));
}
