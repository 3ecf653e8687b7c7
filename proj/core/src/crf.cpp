#include "dctx/crf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dctx {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse(const Eigen::VectorXd& x) {
  double m = x.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (long i = 0; i < x.size(); ++i)
    if (x[i] != kNegInf) s += std::exp(x[i] - m);
  return m + std::log(s);
}

using AllowedFn = std::vector<std::vector<bool>>;  // n x K

AllowedFn all_allowed(int n, int K) {
  return AllowedFn(static_cast<size_t>(n),
                   std::vector<bool>(static_cast<size_t>(K), true));
}

struct FBResult {
  double log_z = 0.0;
  Mat d_emis;
  Eigen::VectorXd d_start, d_stop;
  Mat d_trans;
  Mat d_trans2;
};

FBResult forward_backward_o1(const Mat& e, const Eigen::VectorXd& start,
                             const Eigen::VectorXd& stop, const Mat& trans,
                             const AllowedFn& allowed) {
  const int n = static_cast<int>(e.rows());
  const int K = static_cast<int>(e.cols());
  Mat alpha = Mat::Constant(n, K, kNegInf);
  for (int k = 0; k < K; ++k)
    if (allowed[0][static_cast<size_t>(k)]) alpha(0, k) = start[k] + e(0, k);
  Eigen::VectorXd scratch(K);
  for (int i = 1; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      if (!allowed[static_cast<size_t>(i)][static_cast<size_t>(k)]) continue;
      for (int j = 0; j < K; ++j) scratch[j] = alpha(i - 1, j) + trans(j, k);
      alpha(i, k) = e(i, k) + lse(scratch);
    }
  for (int k = 0; k < K; ++k) scratch[k] = alpha(n - 1, k) + stop[k];
  FBResult res;
  res.log_z = lse(scratch);

  Mat beta = Mat::Constant(n, K, kNegInf);
  beta.row(n - 1) = stop.transpose();
  for (int i = n - 2; i >= 0; --i)
    for (int j = 0; j < K; ++j) {
      for (int k = 0; k < K; ++k)
        scratch[k] = allowed[static_cast<size_t>(i + 1)][static_cast<size_t>(k)]
                         ? trans(j, k) + e(i + 1, k) + beta(i + 1, k)
                         : kNegInf;
      beta(i, j) = lse(scratch);
    }

  res.d_emis = Mat::Zero(n, K);
  res.d_start = Eigen::VectorXd::Zero(K);
  res.d_stop = Eigen::VectorXd::Zero(K);
  res.d_trans = Mat::Zero(K, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) {
      double a = alpha(i, k) + beta(i, k);
      if (a != kNegInf) res.d_emis(i, k) = std::exp(a - res.log_z);
    }
  res.d_start = res.d_emis.row(0).transpose();
  res.d_stop = res.d_emis.row(n - 1).transpose();
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < K; ++j) {
      if (alpha(i - 1, j) == kNegInf) continue;
      for (int k = 0; k < K; ++k) {
        if (!allowed[static_cast<size_t>(i)][static_cast<size_t>(k)]) continue;
        double a = alpha(i - 1, j) + trans(j, k) + e(i, k) + beta(i, k);
        if (a != kNegInf) res.d_trans(j, k) += std::exp(a - res.log_z);
      }
    }
  return res;
}

FBResult forward_backward_o2(const Mat& e, const Eigen::VectorXd& start,
                             const Eigen::VectorXd& stop, const Mat& trans,
                             const Mat& trans2, const AllowedFn& allowed) {
  const int n = static_cast<int>(e.rows());
  const int K = static_cast<int>(e.cols());
  FBResult res;
  res.d_emis = Mat::Zero(n, K);
  res.d_start = Eigen::VectorXd::Zero(K);
  res.d_stop = Eigen::VectorXd::Zero(K);
  res.d_trans = Mat::Zero(K, K);
  res.d_trans2 = Mat::Zero(K * K, K);

  if (n == 1) {
    Eigen::VectorXd s(K);
    for (int k = 0; k < K; ++k)
      s[k] = allowed[0][static_cast<size_t>(k)]
                 ? start[k] + e(0, k) + stop[k]
                 : kNegInf;
    res.log_z = lse(s);
    for (int k = 0; k < K; ++k)
      if (s[k] != kNegInf) {
        double m = std::exp(s[k] - res.log_z);
        res.d_emis(0, k) = m;
        res.d_start[k] = m;
        res.d_stop[k] = m;
      }
    return res;
  }

  const int S = K * K;  // pair state (y_{i-1}=a, y_i=b) -> a*K+b
  // A(i, s) defined for i in [1, n).
  Mat A = Mat::Constant(n, S, kNegInf);
  for (int a = 0; a < K; ++a) {
    if (!allowed[0][static_cast<size_t>(a)]) continue;
    for (int b = 0; b < K; ++b) {
      if (!allowed[1][static_cast<size_t>(b)]) continue;
      A(1, a * K + b) = start[a] + e(0, a) + trans(a, b) + e(1, b);
    }
  }
  Eigen::VectorXd scratch(K);
  for (int i = 2; i < n; ++i)
    for (int b = 0; b < K; ++b)
      for (int c = 0; c < K; ++c) {
        if (!allowed[static_cast<size_t>(i)][static_cast<size_t>(c)]) continue;
        for (int a = 0; a < K; ++a)
          scratch[a] = A(i - 1, a * K + b) + trans2(a * K + b, c);
        A(i, b * K + c) = e(i, c) + lse(scratch);
      }
  Eigen::VectorXd fin(S);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) fin[a * K + b] = A(n - 1, a * K + b) + stop[b];
  res.log_z = lse(fin);

  Mat B = Mat::Constant(n, S, kNegInf);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b) B(n - 1, a * K + b) = stop[b];
  for (int i = n - 2; i >= 1; --i)
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) {
        for (int c = 0; c < K; ++c)
          scratch[c] =
              allowed[static_cast<size_t>(i + 1)][static_cast<size_t>(c)]
                  ? trans2(a * K + b, c) + e(i + 1, c) + B(i + 1, b * K + c)
                  : kNegInf;
        B(i, a * K + b) = lse(scratch);
      }

  // Pair-state marginals.
  auto pair_marg = [&](int i, int a, int b) -> double {
    double v = A(i, a * K + b) + B(i, a * K + b);
    return v == kNegInf ? 0.0 : std::exp(v - res.log_z);
  };
  for (int i = 1; i < n; ++i)
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) {
        double m = pair_marg(i, a, b);
        if (m == 0.0) continue;
        res.d_emis(i, b) += m;
        if (i == 1) {
          res.d_emis(0, a) += m;
          res.d_start[a] += m;
          res.d_trans(a, b) += m;
        }
        if (i == n - 1) res.d_stop[b] += m;
      }
  // Triple expectations feed trans2.
  for (int i = 2; i < n; ++i)
    for (int a = 0; a < K; ++a)
      for (int b = 0; b < K; ++b) {
        if (A(i - 1, a * K + b) == kNegInf) continue;
        for (int c = 0; c < K; ++c) {
          if (!allowed[static_cast<size_t>(i)][static_cast<size_t>(c)])
            continue;
          double v = A(i - 1, a * K + b) + trans2(a * K + b, c) + e(i, c) +
                     B(i, b * K + c);
          if (v != kNegInf) res.d_trans2(a * K + b, c) += std::exp(v - res.log_z);
        }
      }
  return res;
}

FBResult forward_backward(const Mat& e, const Eigen::VectorXd& start,
                          const Eigen::VectorXd& stop, const Mat& trans,
                          const Mat& trans2, int order,
                          const AllowedFn& allowed) {
  if (order == 1) {
    FBResult r = forward_backward_o1(e, start, stop, trans, allowed);
    r.d_trans2 = Mat::Zero(trans.rows() * trans.rows(), trans.rows());
    return r;
  }
  return forward_backward_o2(e, start, stop, trans, trans2, allowed);
}

}  // namespace

CrfParams CrfParams::zeros(int order, int K) {
  CrfParams p;
  p.order = order;
  p.K = K;
  p.start = Eigen::VectorXd::Zero(K);
  p.stop = Eigen::VectorXd::Zero(K);
  p.trans = Mat::Zero(K, K);
  p.trans2 = Mat::Zero(K * K, K);
  return p;
}

double sequence_score(const EmissionSeq& e, const CrfParams& p,
                      const std::vector<int>& labels) {
  const int n = e.n;
  double s = p.start[labels[0]] + e.scores(0, labels[0]) +
             p.stop[labels[static_cast<size_t>(n - 1)]];
  for (int i = 1; i < n; ++i) s += e.scores(i, labels[static_cast<size_t>(i)]);
  if (p.order == 1) {
    for (int i = 1; i < n; ++i)
      s += p.trans(labels[static_cast<size_t>(i - 1)],
                   labels[static_cast<size_t>(i)]);
  } else {
    if (n >= 2) s += p.trans(labels[0], labels[1]);
    for (int i = 2; i < n; ++i)
      s += p.trans2(labels[static_cast<size_t>(i - 2)] * p.K +
                        labels[static_cast<size_t>(i - 1)],
                    labels[static_cast<size_t>(i)]);
  }
  return s;
}

double log_partition(const EmissionSeq& e, const CrfParams& p) {
  auto allowed = all_allowed(e.n, p.K);
  return forward_backward(e.scores, p.start, p.stop, p.trans, p.trans2,
                          p.order, allowed)
      .log_z;
}

double crf_nll(const EmissionSeq& e, const CrfParams& p,
               const std::vector<int>& gold) {
  for (int g : gold)
    if (g < 0 || g >= p.K)
      throw std::out_of_range("crf_nll: gold label out of range");
  return log_partition(e, p) - sequence_score(e, p, gold);
}

ViterbiResult viterbi(const EmissionSeq& e, const CrfParams& p) {
  const int n = e.n, K = p.K;
  ViterbiResult res;
  if (p.order == 1) {
    Mat score(n, K);
    Eigen::MatrixXi back(n, K);
    for (int k = 0; k < K; ++k) score(0, k) = p.start[k] + e.scores(0, k);
    for (int i = 1; i < n; ++i)
      for (int k = 0; k < K; ++k) {
        int best = 0;
        double bv = score(i - 1, 0) + p.trans(0, k);
        for (int j = 1; j < K; ++j) {
          double v = score(i - 1, j) + p.trans(j, k);
          if (v > bv) {
            bv = v;
            best = j;
          }
        }
        score(i, k) = bv + e.scores(i, k);
        back(i, k) = best;
      }
    int best = 0;
    double bv = score(n - 1, 0) + p.stop[0];
    for (int k = 1; k < K; ++k) {
      double v = score(n - 1, k) + p.stop[k];
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    res.score = bv;
    res.labels.assign(static_cast<size_t>(n), 0);
    res.labels[static_cast<size_t>(n - 1)] = best;
    for (int i = n - 1; i > 0; --i)
      res.labels[static_cast<size_t>(i - 1)] =
          back(i, res.labels[static_cast<size_t>(i)]);
    return res;
  }

  // Order 2 over pair states.
  if (n == 1) {
    int best = 0;
    double bv = p.start[0] + e.scores(0, 0) + p.stop[0];
    for (int k = 1; k < K; ++k) {
      double v = p.start[k] + e.scores(0, k) + p.stop[k];
      if (v > bv) {
        bv = v;
        best = k;
      }
    }
    res.score = bv;
    res.labels = {best};
    return res;
  }
  const int S = K * K;
  Mat score = Mat::Constant(n, S, kNegInf);
  Eigen::MatrixXi back = Eigen::MatrixXi::Zero(n, S);
  for (int a = 0; a < K; ++a)
    for (int b = 0; b < K; ++b)
      score(1, a * K + b) = p.start[a] + e.scores(0, a) + p.trans(a, b) +
                            e.scores(1, b);
  for (int i = 2; i < n; ++i)
    for (int b = 0; b < K; ++b)
      for (int c = 0; c < K; ++c) {
        int best = 0;
        double bv = score(i - 1, 0 * K + b) + p.trans2(0 * K + b, c);
        for (int a = 1; a < K; ++a) {
          double v = score(i - 1, a * K + b) + p.trans2(a * K + b, c);
          if (v > bv) {
            bv = v;
            best = a;
          }
        }
        score(i, b * K + c) = bv + e.scores(i, c);
        back(i, b * K + c) = best;
      }
  int bs = 0;
  double bv = kNegInf;
  for (int s = 0; s < S; ++s) {
    double v = score(n - 1, s) + p.stop[s % K];
    if (v > bv) {
      bv = v;
      bs = s;
    }
  }
  res.score = bv;
  res.labels.assign(static_cast<size_t>(n), 0);
  res.labels[static_cast<size_t>(n - 1)] = bs % K;
  res.labels[static_cast<size_t>(n - 2)] = bs / K;
  int cur = bs;
  for (int i = n - 1; i >= 2; --i) {
    int a = back(i, cur);
    res.labels[static_cast<size_t>(i - 2)] = a;
    cur = a * K + (cur / K);
  }
  return res;
}

namespace {

std::map<SpeakerId, std::vector<int>> split_by_speaker(
    const std::vector<SpeakerId>& speakers) {
  std::map<SpeakerId, std::vector<int>> out;
  for (size_t i = 0; i < speakers.size(); ++i)
    out[speakers[i]].push_back(static_cast<int>(i));
  return out;
}

const CrfParams& role_params(
    const std::map<SpeakerId, const CrfParams*>& params_by_role,
    const SpeakerId& sp) {
  auto it = params_by_role.find(sp);
  if (it == params_by_role.end() || it->second == nullptr)
    throw std::out_of_range("speaker_crf: unmapped speaker: " + sp);
  return *it->second;
}

}  // namespace

double speaker_crf_nll(const EmissionSeq& e,
                       const std::vector<SpeakerId>& speakers,
                       const std::map<SpeakerId, const CrfParams*>& params_by_role,
                       const std::vector<int>& gold) {
  double total = 0.0;
  for (const auto& [sp, idx] : split_by_speaker(speakers)) {
    const CrfParams& p = role_params(params_by_role, sp);
    Mat sub(idx.size(), e.scores.cols());
    std::vector<int> sub_gold;
    for (size_t i = 0; i < idx.size(); ++i) {
      sub.row(static_cast<long>(i)) = e.scores.row(idx[i]);
      sub_gold.push_back(gold[static_cast<size_t>(idx[i])]);
    }
    total += crf_nll(EmissionSeq(std::move(sub)), p, sub_gold);
  }
  return total;
}

std::vector<int> speaker_viterbi(const EmissionSeq& e,
                                 const std::vector<SpeakerId>& speakers,
                                 const std::map<SpeakerId, const CrfParams*>&
                                     params_by_role) {
  std::vector<int> out(speakers.size(), 0);
  for (const auto& [sp, idx] : split_by_speaker(speakers)) {
    const CrfParams& p = role_params(params_by_role, sp);
    Mat sub(idx.size(), e.scores.cols());
    for (size_t i = 0; i < idx.size(); ++i)
      sub.row(static_cast<long>(i)) = e.scores.row(idx[i]);
    ViterbiResult r = viterbi(EmissionSeq(std::move(sub)), p);
    for (size_t i = 0; i < idx.size(); ++i)
      out[static_cast<size_t>(idx[i])] = r.labels[i];
  }
  return out;
}

Var crf_nll_loss(Tape& t, Var emissions, const CrfVars& p,
                 const std::vector<int>& gold, const std::vector<bool>& mask) {
  const Mat& e = emissions.val();
  const int n = static_cast<int>(e.rows());
  const int K = static_cast<int>(e.cols());
  if (static_cast<int>(gold.size()) != n ||
      static_cast<int>(mask.size()) != n)
    throw ShapeError("crf_nll_loss: gold/mask length mismatch");
  for (int i = 0; i < n; ++i)
    if (mask[static_cast<size_t>(i)] &&
        (gold[static_cast<size_t>(i)] < 0 || gold[static_cast<size_t>(i)] >= K))
      throw std::out_of_range("crf_nll_loss: gold label out of range");

  Eigen::VectorXd start = p.start.val().row(0).transpose();
  Eigen::VectorXd stop = p.stop.val().row(0).transpose();
  const Mat& trans = p.trans.val();
  Mat trans2 = p.order == 2 ? p.trans2.val() : Mat::Zero(K * K, K);

  AllowedFn free = all_allowed(n, K);
  AllowedFn constrained = free;
  for (int i = 0; i < n; ++i)
    if (mask[static_cast<size_t>(i)])
      for (int k = 0; k < K; ++k)
        constrained[static_cast<size_t>(i)][static_cast<size_t>(k)] =
            (k == gold[static_cast<size_t>(i)]);

  FBResult u = forward_backward(e, start, stop, trans, trans2, p.order, free);
  FBResult c =
      forward_backward(e, start, stop, trans, trans2, p.order, constrained);

  double value = u.log_z - c.log_z;
  std::vector<Var> inputs = {emissions, p.start, p.stop, p.trans};
  bool with_t2 = p.order == 2;
  if (with_t2) inputs.push_back(p.trans2);

  Mat de = u.d_emis - c.d_emis;
  Eigen::RowVectorXd ds = (u.d_start - c.d_start).transpose();
  Eigen::RowVectorXd dp = (u.d_stop - c.d_stop).transpose();
  Mat dt = u.d_trans - c.d_trans;
  Mat dt2 = u.d_trans2 - c.d_trans2;

  return t.custom(
      inputs, Mat::Constant(1, 1, value),
      [de, ds, dp, dt, dt2, with_t2](const Mat& og,
                                     const std::vector<Mat*>& grads) {
        double s = og(0, 0);
        *grads[0] += s * de;
        grads[1]->row(0) += s * ds;
        grads[2]->row(0) += s * dp;
        *grads[3] += s * dt;
        if (with_t2) *grads[4] += s * dt2;
      });
}

}  // namespace dctx
