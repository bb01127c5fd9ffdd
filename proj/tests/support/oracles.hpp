#pragma once

// Independent reference computations used by the tests.

#include "demforge/assimilate.hpp"
#include "demforge/grid.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

// Direct solve of the discrete Laplace equation with Dirichlet pins and
// zero-flux edges: for every free node, sum over in-grid neighbours of
// (b_n - b) = 0.
inline demforge::ElevationGrid direct_laplace(const demforge::GridGeometry& g,
                                              const std::vector<demforge::Pin>& pins) {
  const std::size_t n = g.size();
  std::vector<int> pinned(n, 0);
  std::vector<double> pin_value(n, 0.0);
  for (const auto& p : pins) {
    pinned[g.index(p.node)] = 1;
    pin_value[g.index(p.node)] = p.value;
  }
  std::vector<int> unknown(n, -1);
  int m = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (!pinned[k]) unknown[k] = m++;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  const int di[4] = {1, -1, 0, 0};
  const int dj[4] = {0, 0, 1, -1};
  for (int j = 0; j < g.n_rows; ++j)
    for (int i = 0; i < g.n_cols; ++i) {
      const int row = unknown[g.index(i, j)];
      if (row < 0) continue;
      double diag = 0.0;
      for (int d = 0; d < 4; ++d) {
        const int ni = i + di[d], nj = j + dj[d];
        if (!g.in_bounds(ni, nj)) continue;
        diag += 1.0;
        const auto nk = g.index(ni, nj);
        if (pinned[nk])
          rhs[row] += pin_value[nk];
        else
          trip.emplace_back(row, unknown[nk], -1.0);
      }
      trip.emplace_back(row, row, diag);
    }
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw std::runtime_error("direct Laplace factorization failed");
  const Eigen::VectorXd x = lu.solve(rhs);

  demforge::ElevationGrid out(g);
  for (std::size_t k = 0; k < n; ++k)
    out.values()[k] = pinned[k] ? pin_value[k] : x[unknown[k]];
  return out;
}

// Ritter dam-break depth for an initial step h0 at x = 0 over a dry flat bed.
inline double ritter_depth(double x, double t, double h0, double gravity) {
  const double c0 = std::sqrt(gravity * h0);
  if (t <= 0.0) return x < 0.0 ? h0 : 0.0;
  if (x <= -c0 * t) return h0;
  if (x >= 2.0 * c0 * t) return 0.0;
  const double r = 2.0 * c0 - x / t;
  return r * r / (9.0 * gravity);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("demforge_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + p.string());
  std::string s;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace oracle
