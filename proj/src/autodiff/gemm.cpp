#include <Eigen/Core>

#include "deepcq/autodiff/graph.hpp"

namespace deepcq::ad {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c,
          bool accumulate) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Idx = Eigen::Index;
    const auto M = static_cast<Idx>(m), N = static_cast<Idx>(n), K = static_cast<Idx>(k);
    Eigen::Map<const Mat> A(a, trans_a ? K : M, trans_a ? M : K);
    Eigen::Map<const Mat> B(b, trans_b ? N : K, trans_b ? K : N);
    Eigen::Map<Mat> C(c, M, N);
    auto run = [&](const auto& opa, const auto& opb) {
        if (accumulate)
            C.noalias() += opa * opb;
        else
            C.noalias() = opa * opb;
    };
    if (trans_a && trans_b)
        run(A.transpose(), B.transpose());
    else if (trans_a)
        run(A.transpose(), B);
    else if (trans_b)
        run(A, B.transpose());
    else
        run(A, B);
}

template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, const double*, const double*, double*,
                           bool);

}  // namespace deepcq::ad
