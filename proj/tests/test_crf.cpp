#include <doctest.h>

#include "dctx/crf.hpp"
#include "dctx/gradcheck.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace dctx;

namespace {

CrfParams random_params(int order, int K, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CrfParams p = CrfParams::zeros(order, K);
  for (int i = 0; i < K; ++i) {
    p.start(i) = g(rng);
    p.stop(i) = g(rng);
    for (int j = 0; j < K; ++j) p.trans(i, j) = g(rng);
  }
  if (order == 2)
    for (int i = 0; i < K * K; ++i)
      for (int j = 0; j < K; ++j) p.trans2(i, j) = g(rng);
  return p;
}

EmissionSeq random_emissions(int n, int K, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Mat s(n, K);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < K; ++k) s(i, k) = g(rng);
  return EmissionSeq(s);
}

/// All K^n sequences, visiting labels lexicographically.
template <typename F>
void enumerate(int n, int K, F&& fn) {
  std::vector<int> seq(static_cast<size_t>(n), 0);
  while (true) {
    fn(seq);
    int i = n - 1;
    while (i >= 0 && seq[static_cast<size_t>(i)] == K - 1) {
      seq[static_cast<size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
    ++seq[static_cast<size_t>(i)];
  }
}

double brute_logZ(const EmissionSeq& e, const CrfParams& p) {
  std::vector<double> scores;
  enumerate(e.n, p.K, [&](const std::vector<int>& seq) {
    scores.push_back(sequence_score(e, p, seq));
  });
  Eigen::VectorXd v =
      Eigen::Map<Eigen::VectorXd>(scores.data(), static_cast<long>(scores.size()));
  return log_sum_exp(v);
}

std::vector<int> brute_argmax(const EmissionSeq& e, const CrfParams& p) {
  std::vector<int> best;
  double best_score = -1e300;
  enumerate(e.n, p.K, [&](const std::vector<int>& seq) {
    double s = sequence_score(e, p, seq);
    if (s > best_score) {
      best_score = s;
      best = seq;
    }
  });
  return best;
}

}  // namespace

TEST_CASE("random instances match brute-force enumeration (both orders)") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    int order = 1 + static_cast<int>(rng() % 2);
    int K = 2 + static_cast<int>(rng() % 3);  // 2..4
    int n = 1 + static_cast<int>(rng() % 6);  // 1..6
    CrfParams p = random_params(order, K, rng);
    EmissionSeq e = random_emissions(n, K, rng);

    double lz = log_partition(e, p);
    double blz = brute_logZ(e, p);
    CHECK(std::abs(lz - blz) / std::max(1.0, std::abs(blz)) < 1e-9);

    CHECK(viterbi(e, p).labels == brute_argmax(e, p));

    // exp(-nll) over all sequences sums to 1
    double mass = 0.0;
    enumerate(n, K, [&](const std::vector<int>& seq) {
      mass += std::exp(-crf_nll(e, p, seq));
    });
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("viterbi score equals the score of its own decode") {
  std::mt19937_64 rng(7);
  for (int order : {1, 2}) {
    CrfParams p = random_params(order, 3, rng);
    EmissionSeq e = random_emissions(5, 3, rng);
    ViterbiResult v = viterbi(e, p);
    CHECK(v.score == doctest::Approx(sequence_score(e, p, v.labels)));
  }
}

TEST_CASE("uniform scores tie-break toward the lowest label index") {
  CrfParams p = CrfParams::zeros(1, 3);
  EmissionSeq e{Mat::Zero(4, 3)};
  auto v = viterbi(e, p);
  CHECK(v.labels == std::vector<int>({0, 0, 0, 0}));
}

TEST_CASE("order-2 with first-index-constant trans2 degenerates to order 1") {
  std::mt19937_64 rng(42);
  CrfParams p1 = random_params(1, 3, rng);
  CrfParams p2 = CrfParams::zeros(2, 3);
  p2.start = p1.start;
  p2.stop = p1.stop;
  p2.trans = p1.trans;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b)
      for (int c = 0; c < 3; ++c) p2.trans2(a * 3 + b, c) = p1.trans(b, c);
  EmissionSeq e = random_emissions(6, 3, rng);
  CHECK(log_partition(e, p2) == doctest::Approx(log_partition(e, p1)));
  CHECK(viterbi(e, p2).labels == viterbi(e, p1).labels);
  std::vector<int> gold = {0, 2, 1, 1, 0, 2};
  CHECK(crf_nll(e, p2, gold) == doctest::Approx(crf_nll(e, p1, gold)));
}

TEST_CASE("speaker crf sums per-speaker chain losses") {
  std::mt19937_64 rng(5);
  CrfParams pa = random_params(1, 3, rng);
  CrfParams pb = random_params(1, 3, rng);
  EmissionSeq e = random_emissions(5, 3, rng);
  std::vector<SpeakerId> speakers = {"A", "B", "A", "A", "B"};
  std::vector<int> gold = {0, 1, 2, 0, 1};
  std::map<SpeakerId, const CrfParams*> roles = {{"A", &pa}, {"B", &pb}};

  Mat ea(3, 3), eb(2, 3);
  ea.row(0) = e.scores.row(0);
  ea.row(1) = e.scores.row(2);
  ea.row(2) = e.scores.row(3);
  eb.row(0) = e.scores.row(1);
  eb.row(1) = e.scores.row(4);
  double expect = crf_nll(EmissionSeq(ea), pa, {0, 2, 0}) +
                  crf_nll(EmissionSeq(eb), pb, {1, 1});
  CHECK(speaker_crf_nll(e, speakers, roles, gold) == doctest::Approx(expect));

  auto labels = speaker_viterbi(e, speakers, roles);
  auto va = viterbi(EmissionSeq(ea), pa).labels;
  auto vb = viterbi(EmissionSeq(eb), pb).labels;
  CHECK(labels == std::vector<int>({va[0], vb[0], va[1], va[2], vb[1]}));
}

namespace {

double tape_crf_loss(ParamSet& ps, int order, int n, int K,
                     const std::vector<int>& gold,
                     const std::vector<bool>& mask, bool backward) {
  Tape t;
  Var emissions = t.param(ps.at("emis"));
  CrfVars cv;
  cv.order = order;
  cv.start = t.param(ps.at("start"));
  cv.stop = t.param(ps.at("stop"));
  cv.trans = t.param(ps.at("trans"));
  if (order == 2) cv.trans2 = t.param(ps.at("trans2"));
  Var loss = crf_nll_loss(t, emissions, cv, gold, mask);
  if (backward) t.backward(loss);
  return loss.val()(0, 0);
}

void build_crf_paramset(ParamSet& ps, int order, int n, int K, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  auto randmat = [&](long r, long c) {
    Mat m(r, c);
    for (long i = 0; i < r; ++i)
      for (long j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
  };
  ps.add("emis", randmat(n, K));
  ps.add("start", randmat(1, K));
  ps.add("stop", randmat(1, K));
  ps.add("trans", randmat(K, K));
  if (order == 2) ps.add("trans2", randmat(static_cast<long>(K) * K, K));
}

}  // namespace

TEST_CASE("differentiable crf loss matches scalar nll on full masks") {
  for (int order : {1, 2}) {
    int n = 5, K = 3;
    ParamSet ps(0);
    build_crf_paramset(ps, order, n, K, 99);
    std::vector<int> gold = {2, 0, 1, 1, 0};
    std::vector<bool> mask(5, true);
    double loss = tape_crf_loss(ps, order, n, K, gold, mask, false);
    CrfParams p = CrfParams::zeros(order, K);
    p.start = ps.at("start").value.row(0).transpose();
    p.stop = ps.at("stop").value.row(0).transpose();
    p.trans = ps.at("trans").value;
    if (order == 2) p.trans2 = ps.at("trans2").value;
    EmissionSeq e(ps.at("emis").value);
    CHECK(loss == doctest::Approx(crf_nll(e, p, gold)));
  }
}

TEST_CASE("masked positions are marginalized (enumeration oracle)") {
  int n = 4, K = 3, order = 1;
  ParamSet ps(0);
  build_crf_paramset(ps, order, n, K, 123);
  std::vector<int> gold = {1, 0, 2, 1};
  std::vector<bool> mask = {true, false, true, false};
  double loss = tape_crf_loss(ps, order, n, K, gold, mask, false);

  CrfParams p = CrfParams::zeros(order, K);
  p.start = ps.at("start").value.row(0).transpose();
  p.stop = ps.at("stop").value.row(0).transpose();
  p.trans = ps.at("trans").value;
  EmissionSeq e(ps.at("emis").value);
  // loss = logZ - log sum over sequences agreeing with gold where mask=true
  std::vector<double> all, constrained;
  enumerate(n, K, [&](const std::vector<int>& seq) {
    double s = sequence_score(e, p, seq);
    all.push_back(s);
    bool ok = true;
    for (int i = 0; i < n; ++i)
      if (mask[static_cast<size_t>(i)] &&
          seq[static_cast<size_t>(i)] != gold[static_cast<size_t>(i)])
        ok = false;
    if (ok) constrained.push_back(s);
  });
  auto lse = [](std::vector<double>& v) {
    Eigen::VectorXd m =
        Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
    return log_sum_exp(m);
  };
  CHECK(loss == doctest::Approx(lse(all) - lse(constrained)));
}

TEST_CASE("crf loss gradients pass finite differences (both orders)") {
  for (int order : {1, 2}) {
    int n = 5, K = 3;
    ParamSet ps(0);
    build_crf_paramset(ps, order, n, K, 7 + static_cast<uint64_t>(order));
    std::vector<int> gold = {0, 2, 1, 0, 2};
    std::vector<bool> mask = {true, true, false, true, true};
    ps.zero_grads();
    tape_crf_loss(ps, order, n, K, gold, mask, true);
    auto res = finite_diff_check(
        [&](ParamSet& p) {
          return tape_crf_loss(p, order, n, K, gold, mask, false);
        },
        ps, 120, 1e-6);
    CHECK(res.coords_checked >= 100);
    CHECK(res.max_rel_err < 1e-6);
  }
}
