#include "fsmle/design.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace fsmle {

Design::Design(MatrixXd m) : rows(std::move(m)) {
  if (rows.rows() < rows.cols() || rows.cols() < 1) {
    throw std::invalid_argument("design: need n >= p >= 1");
  }
  Eigen::FullPivLU<MatrixXd> lu(rows.transpose() * rows);
  lu.setThreshold(1e-10);
  if (lu.rank() < rows.cols()) {
    throw std::invalid_argument("design: Gram matrix is rank deficient");
  }
}

Design make_orthonormal_design(int n, int p) {
  if (n < p || p < 1) throw std::invalid_argument("design: need n >= p >= 1");
  MatrixXd m = MatrixXd::Zero(n, p);
  int base = n / p, extra = n % p;
  int r = 0;
  for (int j = 0; j < p; ++j) {
    int count = base + (j < extra ? 1 : 0);
    for (int k = 0; k < count; ++k) m(r++, j) = 1.0;
  }
  return Design(std::move(m));
}

Design make_normal_design(int n, int p, std::uint64_t seed) {
  Rng rng(seed, 0, /*tag=*/101);
  MatrixXd m(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) m(i, j) = rng.normal();
  }
  return Design(std::move(m));
}

Design load_design_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("design: cannot open " + path);
  std::vector<std::vector<double>> data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      size_t pos = 0;
      double v = std::stod(cell, &pos);
      row.push_back(v);
    }
    if (!data.empty() && row.size() != data.front().size()) {
      throw std::invalid_argument("design: ragged rows in " + path);
    }
    data.push_back(std::move(row));
  }
  if (data.empty()) throw std::invalid_argument("design: empty file " + path);
  MatrixXd m(static_cast<long>(data.size()), static_cast<long>(data.front().size()));
  for (long i = 0; i < m.rows(); ++i) {
    for (long j = 0; j < m.cols(); ++j) {
      m(i, j) = data[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
  }
  return Design(std::move(m));
}

}  // namespace fsmle
