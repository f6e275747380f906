#include <algorithm>
#include <cmath>
#include <numeric>

#include "dustbin/viz.hpp"

namespace dustbin {

std::pair<Eigen::VectorXd, Eigen::MatrixXd> jacobi_eigen(const Eigen::MatrixXd& symmetric) {
  if (symmetric.rows() != symmetric.cols()) throw DimensionError("jacobi_eigen needs a square matrix");
  const Eigen::Index n = symmetric.rows();
  Eigen::MatrixXd a = 0.5 * (symmetric + symmetric.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    }
    if (std::sqrt(off) <= 1e-15 * scale) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle from the symmetric Schur decomposition of the 2x2 block.
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) > a(j, j); });
  Eigen::VectorXd values(n);
  Eigen::MatrixXd vectors(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    vectors.col(i) = v.col(order[static_cast<std::size_t>(i)]);
  }
  return {values, vectors};
}

Projection pca_project(const Array& features, std::size_t k, std::vector<std::string> groups) {
  if (features.rank() != 2) throw DimensionError("pca_project needs an n x d feature matrix");
  const std::size_t n = features.shape()[0];
  const std::size_t d = features.shape()[1];
  if (k == 0) throw ConfigError("pca_project needs k >= 1");
  if (n < k || d < k) {
    throw ContractError("pca_project needs n >= k and d >= k (n=" + std::to_string(n) + ", d=" + std::to_string(d) +
                        ", k=" + std::to_string(k) + ")");
  }
  if (!groups.empty() && groups.size() != n) throw DimensionError("pca_project: one group label per row");

  const Eigen::MatrixXd x = features.matrix();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
  auto [values, vectors] = jacobi_eigen(cov);

  // Eigenvalues below rounding level of the trace count as missing directions.
  const double tol = 1e-12 * std::max(1.0, cov.trace());
  std::size_t found = 0;
  while (found < k && values[static_cast<Eigen::Index>(found)] > tol) ++found;

  Projection p;
  p.components_found = found;
  p.degenerate = found < k;
  p.groups = std::move(groups);
  p.explained_variance.assign(k, 0.0);
  Eigen::MatrixXd comps(static_cast<Eigen::Index>(found), static_cast<Eigen::Index>(d));
  for (std::size_t c = 0; c < found; ++c) {
    Eigen::VectorXd v = vectors.col(static_cast<Eigen::Index>(c));
    Eigen::Index big = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (std::abs(v[i]) > std::abs(v[big])) big = i;
    }
    if (v[big] < 0) v = -v;
    comps.row(static_cast<Eigen::Index>(c)) = v.transpose();
    p.components.emplace_back(Shape{d}, v);
    p.explained_variance[c] = values[static_cast<Eigen::Index>(c)];
  }
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  if (found > 0) coords.leftCols(static_cast<Eigen::Index>(found)) = centered * comps.transpose();

  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = coords;
  p.coords = Array({n, k}, Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size()));
  return p;
}

}  // namespace dustbin
