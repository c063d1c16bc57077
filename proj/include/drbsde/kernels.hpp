#pragma once

#include "drbsde/execution.hpp"

#include <Eigen/Dense>

namespace drbsde::kernels {

// Row block of the dense kernel. Batches are padded to a multiple of this so
// every row goes through the same vector code, which makes the output of a
// row independent of its position in the batch and of the batch size.
inline constexpr int kRowBlock = 16;

inline int padded_rows(int rows) { return (rows + kRowBlock - 1) / kRowBlock * kRowBlock; }

// out = in * W^T + 1 b^T, accumulating over k in increasing order for every
// element. `in` and `out` have padded_rows rows. Serial and parallel modes are
// bitwise identical.
void affine(const Eigen::MatrixXd& in, const Eigen::MatrixXd& W, const Eigen::VectorXd& b, Eigen::MatrixXd& out,
            Execution exec);

// Elementwise tanh, evaluated as sign(x) (1 - e) / (1 + e) with e = exp(-2|x|).
void tanh_inplace(Eigen::MatrixXd& m, Execution exec);

}  // namespace drbsde::kernels
