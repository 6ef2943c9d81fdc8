// Copyright 2026 The voxseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "voxseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "voxseg/error.hpp"

namespace voxseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(const LabelVolume& truth, const LabelVolume& pred, const char* op) {
  if (!(truth.dims() == pred.dims())) throw ShapeError(std::string(op) + ": truth and prediction dims differ");
}

std::vector<std::array<std::int64_t, 3>> coords_of(const LabelVolume& v, int class_id) {
  std::vector<std::array<std::int64_t, 3>> out;
  const Dims3& d = v.dims();
  auto data = v.data();
  std::size_t idx = 0;
  for (std::int64_t i = 0; i < d.h; ++i)
    for (std::int64_t j = 0; j < d.w; ++j)
      for (std::int64_t k = 0; k < d.d; ++k, ++idx)
        if (data[idx] == class_id) out.push_back({i, j, k});
  return out;
}

std::int64_t sq_dist(const std::array<std::int64_t, 3>& a, const std::array<std::int64_t, 3>& b) {
  const std::int64_t x = a[0] - b[0], y = a[1] - b[1], z = a[2] - b[2];
  return x * x + y * y + z * z;
}

// max over a of min over b of |a - b|^2, by enumeration.
std::int64_t directed_naive(const std::vector<std::array<std::int64_t, 3>>& a,
                            const std::vector<std::array<std::int64_t, 3>>& b) {
  std::int64_t worst = 0;
  for (const auto& p : a) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& q : b) {
      best = std::min(best, sq_dist(p, q));
      if (best <= worst) break;
    }
    worst = std::max(worst, best);
  }
  return worst;
}

// One pass of the lower-envelope squared distance transform over a line.
// Entries equal to `inf` mark positions with no seed.
void edt_line(const double* f, double* out, std::int64_t n, std::vector<std::int64_t>& v, std::vector<double>& z,
              double inf) {
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] >= inf) continue;
    while (k >= 0) {
      const std::int64_t p = v[static_cast<std::size_t>(k)];
      const double s = ((f[q] + static_cast<double>(q * q)) - (f[p] + static_cast<double>(p * p))) /
                       (2.0 * static_cast<double>(q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = inf;
        break;
      }
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
    }
  }
  if (k < 0) {
    for (std::int64_t q = 0; q < n; ++q) out[q] = inf;
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < static_cast<double>(q)) ++j;
    const std::int64_t p = v[static_cast<std::size_t>(j)];
    out[q] = static_cast<double>((q - p) * (q - p)) + f[p];
  }
}

// Squared Euclidean distance from every voxel to the nearest voxel of the class.
std::vector<double> squared_edt(const LabelVolume& vol, int class_id) {
  const Dims3& d = vol.dims();
  const double inf = kInf;
  std::vector<double> grid(static_cast<std::size_t>(d.voxels()));
  auto data = vol.data();
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = data[i] == class_id ? 0.0 : inf;

  const Extent3 ext = d.extent();
  const std::int64_t longest = std::max({d.h, d.w, d.d});
  std::vector<double> line(static_cast<std::size_t>(longest)), res(line.size());
  std::vector<std::int64_t> v(line.size());
  std::vector<double> z(line.size() + 1);
  for (int axis = 0; axis < 3; ++axis) {
    const std::int64_t len = ext[static_cast<std::size_t>(axis)];
    const std::int64_t stride = axis == 0 ? d.w * d.d : (axis == 1 ? d.d : 1);
    const std::int64_t n0 = axis == 0 ? 1 : d.h;
    const std::int64_t n1 = axis == 1 ? 1 : d.w;
    const std::int64_t n2 = axis == 2 ? 1 : d.d;
    for (std::int64_t i = 0; i < n0; ++i)
      for (std::int64_t j = 0; j < n1; ++j)
        for (std::int64_t k = 0; k < n2; ++k) {
          const std::int64_t base = (i * d.w + j) * d.d + k;
          for (std::int64_t t = 0; t < len; ++t) line[static_cast<std::size_t>(t)] = grid[static_cast<std::size_t>(base + t * stride)];
          edt_line(line.data(), res.data(), len, v, z, inf);
          for (std::int64_t t = 0; t < len; ++t) grid[static_cast<std::size_t>(base + t * stride)] = res[static_cast<std::size_t>(t)];
        }
  }
  return grid;
}

double directed_edt(const LabelVolume& from, const LabelVolume& to, int class_id) {
  const auto dist = squared_edt(to, class_id);
  auto data = from.data();
  double worst = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (data[i] == class_id) worst = std::max(worst, dist[i]);
  }
  return worst;
}

// Pairwise enumeration wins below this many point pairs.
constexpr std::int64_t kNaivePairLimit = 1 << 20;

}  // namespace

double dsc(const LabelVolume& truth, const LabelVolume& pred, int class_id) {
  check_dims(truth, pred, "dsc");
  auto t = truth.data();
  auto p = pred.data();
  std::int64_t g = 0, q = 0, both = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool in_g = t[i] == class_id;
    const bool in_p = p[i] == class_id;
    g += in_g;
    q += in_p;
    both += in_g && in_p;
  }
  if (g + q == 0) return 100.0;
  return 200.0 * static_cast<double>(both) / static_cast<double>(g + q);
}

double hausdorff(const LabelVolume& truth, const LabelVolume& pred, int class_id) {
  check_dims(truth, pred, "hausdorff");
  const auto g = coords_of(truth, class_id);
  const auto p = coords_of(pred, class_id);
  if (g.empty() && p.empty()) return 0.0;
  if (g.empty() || p.empty()) return kInf;
  if (static_cast<std::int64_t>(g.size()) * static_cast<std::int64_t>(p.size()) <= kNaivePairLimit) {
    return std::sqrt(static_cast<double>(std::max(directed_naive(g, p), directed_naive(p, g))));
  }
  return std::sqrt(std::max(directed_edt(truth, pred, class_id), directed_edt(pred, truth, class_id)));
}

namespace detail {

double hausdorff_transform(const LabelVolume& truth, const LabelVolume& pred, int class_id) {
  check_dims(truth, pred, "hausdorff");
  auto has = [class_id](const LabelVolume& v) {
    return std::find(v.data().begin(), v.data().end(), class_id) != v.data().end();
  };
  const bool g = has(truth);
  const bool p = has(pred);
  if (!g && !p) return 0.0;
  if (!g || !p) return kInf;
  return std::sqrt(std::max(directed_edt(truth, pred, class_id), directed_edt(pred, truth, class_id)));
}

}  // namespace detail

MetricReport evaluate(const LabelVolume& truth, const LabelVolume& pred, int num_classes) {
  check_dims(truth, pred, "evaluate");
  if (num_classes < 2) throw ValidationError("evaluate: need at least 2 classes");
  MetricReport r;
  std::vector<double> dscs, hds;
  for (int c = 1; c < num_classes; ++c) {
    ClassMetrics m;
    m.class_id = c;
    m.dsc = dsc(truth, pred, c);
    m.hd = hausdorff(truth, pred, c);
    const auto t = truth.data();
    const auto p = pred.data();
    m.missing_in_truth = std::find(t.begin(), t.end(), c) == t.end();
    m.missing_in_pred = std::find(p.begin(), p.end(), c) == p.end();
    dscs.push_back(m.dsc);
    if (std::isfinite(m.hd)) {
      hds.push_back(m.hd);
    } else {
      ++r.infinite_hd;
    }
    r.per_class.push_back(m);
  }
  auto moments = [](const std::vector<double>& xs, double& mean, double& sd) {
    if (xs.empty()) {
      mean = sd = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    double s = 0.0;
    for (double x : xs) s += x;
    mean = s / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(xs.size()));
  };
  moments(dscs, r.mean_dsc, r.std_dsc);
  moments(hds, r.mean_hd, r.std_hd);
  return r;
}

std::string MetricReport::format() const {
  std::string out;
  char buf[128];
  for (const auto& m : per_class) {
    std::snprintf(buf, sizeof buf, "%d %.4f %.4f\n", m.class_id, m.dsc, m.hd);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%.4f %.4f %.4f %.4f %d\n", mean_dsc, std_dsc, mean_hd, std_hd, infinite_hd);
  out += buf;
  return out;
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("paired_t_test: samples differ in length");
  if (a.size() < 2) throw ValidationError("paired_t_test: need at least 2 pairs");
  const auto n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
  const double sd = std::sqrt(ss / (n - 1.0));

  TTestResult r;
  r.df = static_cast<int>(a.size()) - 1;
  if (sd == 0.0) {
    if (mean == 0.0) return r;
    r.t = mean > 0.0 ? kInf : -kInf;
    r.p = 0.0;
    return r;
  }
  r.t = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(static_cast<double>(r.df));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace voxseg
