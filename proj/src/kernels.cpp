#include "drbsde/kernels.hpp"

#include "drbsde/error.hpp"

#include <array>

namespace drbsde::kernels {

namespace {

using Block = Eigen::Array<double, kRowBlock, 1>;

// JB output columns for one block of kRowBlock rows.
template <int JB>
inline void affine_block(const double* in, Eigen::Index ld_in, int K, const Eigen::MatrixXd& W, const double* b,
                         int j0, double* out, Eigen::Index ld_out) {
    Block acc[JB];
    for (int jj = 0; jj < JB; ++jj) acc[jj].setZero();
    const double* w = W.data() + j0;
    const Eigen::Index ldw = W.rows();
    for (int k = 0; k < K; ++k) {
        const Eigen::Map<const Block> a(in + static_cast<Eigen::Index>(k) * ld_in);
        const double* wk = w + static_cast<Eigen::Index>(k) * ldw;
        for (int jj = 0; jj < JB; ++jj) acc[jj] += wk[jj] * a;
    }
    for (int jj = 0; jj < JB; ++jj) {
        Eigen::Map<Block> o(out + static_cast<Eigen::Index>(j0 + jj) * ld_out);
        o = acc[jj] + b[j0 + jj];
    }
}

void affine_rows(const Eigen::MatrixXd& in, const Eigen::MatrixXd& W, const Eigen::VectorXd& b, Eigen::MatrixXd& out,
                 int r0) {
    const int K = static_cast<int>(W.cols());
    const int J = static_cast<int>(W.rows());
    const double* src = in.data() + r0;
    double* dst = out.data() + r0;
    int j = 0;
    for (; j + 4 <= J; j += 4) affine_block<4>(src, in.rows(), K, W, b.data(), j, dst, out.rows());
    for (; j < J; ++j) affine_block<1>(src, in.rows(), K, W, b.data(), j, dst, out.rows());
}

inline void tanh_block(double* p) {
    Eigen::Map<Block> x(p);
    const Block e = (-2.0 * x.abs()).exp();
    const Block t = (1.0 - e) / (1.0 + e);
    x = (x < 0.0).select(-t, t);
}

}  // namespace

void affine(const Eigen::MatrixXd& in, const Eigen::MatrixXd& W, const Eigen::VectorXd& b, Eigen::MatrixXd& out,
            Execution exec) {
    const Eigen::Index rows = in.rows();
    if (rows % kRowBlock != 0) throw ContractError("affine: row count is not padded");
    if (in.cols() != W.cols() || b.size() != W.rows()) throw ContractError("affine: shape mismatch");
    out.resize(rows, W.rows());
    const int blocks = static_cast<int>(rows / kRowBlock);
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (int blk = 0; blk < blocks; ++blk) affine_rows(in, W, b, out, blk * kRowBlock);
    } else {
        for (int blk = 0; blk < blocks; ++blk) affine_rows(in, W, b, out, blk * kRowBlock);
    }
}

void tanh_inplace(Eigen::MatrixXd& m, Execution exec) {
    if (m.rows() % kRowBlock != 0) throw ContractError("tanh_inplace: row count is not padded");
    const Eigen::Index blocks = m.size() / kRowBlock;
    double* data = m.data();
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (Eigen::Index blk = 0; blk < blocks; ++blk) tanh_block(data + blk * kRowBlock);
    } else {
        for (Eigen::Index blk = 0; blk < blocks; ++blk) tanh_block(data + blk * kRowBlock);
    }
}

}  // namespace drbsde::kernels
