#pragma once

#include <string>

#include "fsmle/linalg.hpp"
#include "fsmle/rng.hpp"

namespace fsmle {

// Fixed regression design, one row per observation.  Construction verifies
// that the Gram matrix has full rank p so every downstream curvature matrix
// is invertible.
struct Design {
  MatrixXd rows;  // n x p

  Design() = default;
  explicit Design(MatrixXd m);

  int n() const { return static_cast<int>(rows.rows()); }
  int p() const { return static_cast<int>(rows.cols()); }
  VectorXd row(int i) const { return rows.row(i).transpose(); }
};

// Block design: basis vector e_1 repeated for the first block, then e_2, ...
// Blocks differ by at most one row when p does not divide n.
Design make_orthonormal_design(int n, int p);

// Rows with independent standard normal entries, reproducible from the seed.
Design make_normal_design(int n, int p, std::uint64_t seed);

// CSV with p numeric columns, no header, one row per observation.
Design load_design_csv(const std::string& path);

}  // namespace fsmle
