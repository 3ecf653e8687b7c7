#include "dctx/gradcheck.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace dctx {

GradCheckResult finite_diff_check(const LossFn& loss_fn, ParamSet& params,
                                  int n_coords, double eps, uint64_t seed) {
  // Flat index space over all parameter coordinates.
  struct Coord {
    Param* p;
    long i, j;
  };
  std::vector<Coord> coords;
  for (auto& [name, p] : params.all())
    for (long i = 0; i < p->value.rows(); ++i)
      for (long j = 0; j < p->value.cols(); ++j)
        coords.push_back({p.get(), i, j});

  std::mt19937_64 rng(seed);
  GradCheckResult res;
  if (coords.empty()) return res;

  for (int k = 0; k < n_coords; ++k) {
    const Coord& c = coords[rng() % coords.size()];
    double analytic = c.p->grad(c.i, c.j);
    double orig = c.p->value(c.i, c.j);
    c.p->value(c.i, c.j) = orig + eps;
    double up = loss_fn(params);
    c.p->value(c.i, c.j) = orig - eps;
    double down = loss_fn(params);
    c.p->value(c.i, c.j) = orig;
    double numeric = (up - down) / (2.0 * eps);
    double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    double rel = std::abs(analytic - numeric) / denom;
    res.max_rel_err = std::max(res.max_rel_err, rel);
    ++res.coords_checked;
  }
  return res;
}

}  // namespace dctx
