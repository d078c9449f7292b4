#pragma once

// Dense numeric kernels for the toy transformer and the probability lab.
// Everything is templated on the scalar: float on the model path, double in
// the theory module. MathMode::Strict pins a fixed, row-independent
// accumulation order so results are bit-reproducible across call shapes;
// MathMode::Fast uses Eigen's optimized products.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdmlab {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using Vecf = Vec<float>;
using Vecd = Vec<double>;

enum class MathMode { Fast, Strict };

struct DimError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename Derived>
void check_finite(const Eigen::DenseBase<Derived>& x, const char* what) {
    if (!x.allFinite()) {
        throw NumericError(std::string(what) + ": non-finite element");
    }
}

// c = a * b. Strict mode runs an (i,k,j) axpy loop: each output row is a sum
// of scaled rows of b in fixed k order, so a row's result does not depend on
// how many other rows are in the call.
template <typename Scalar>
Mat<Scalar> matmul(const Mat<Scalar>& a, const Mat<Scalar>& b, MathMode mode = MathMode::Fast) {
    if (a.cols() != b.rows()) {
        throw DimError("matmul: inner extents " + std::to_string(a.cols()) + " vs " +
                       std::to_string(b.rows()));
    }
    Mat<Scalar> c(a.rows(), b.cols());
    if (mode == MathMode::Fast) {
        c.noalias() = a * b;
    } else {
        c.setZero();
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index k = 0; k < a.cols(); ++k) {
                c.row(i) += a(i, k) * b.row(k);
            }
        }
    }
    check_finite(c, "matmul");
    return c;
}

// c = a * b^T. Rows of both operands are contiguous, so strict mode can use
// per-element dot products (fixed reduction order for a given inner extent).
template <typename Scalar>
Mat<Scalar> matmul_nt(const Mat<Scalar>& a, const Mat<Scalar>& b, MathMode mode = MathMode::Fast) {
    if (a.cols() != b.cols()) {
        throw DimError("matmul_nt: inner extents " + std::to_string(a.cols()) + " vs " +
                       std::to_string(b.cols()));
    }
    Mat<Scalar> c(a.rows(), b.rows());
    if (mode == MathMode::Fast) {
        c.noalias() = a * b.transpose();
    } else {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < b.rows(); ++j) {
                c(i, j) = a.row(i).dot(b.row(j));
            }
        }
    }
    check_finite(c, "matmul_nt");
    return c;
}

// Row-wise softmax, stabilized by max subtraction. Purely row-local, hence
// identical in both math modes.
template <typename Scalar>
void softmax_rows_inplace(Mat<Scalar>& x) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Scalar m = x.row(i).maxCoeff();
        x.row(i) = (x.row(i).array() - m).exp();
        x.row(i) /= x.row(i).sum();
    }
}

template <typename Scalar>
Mat<Scalar> softmax_rows(Mat<Scalar> x) {
    check_finite(x, "softmax input");
    softmax_rows_inplace(x);
    return x;
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row layer norm with biased variance and the 1e-5 floor, then affine.
template <typename Scalar>
Mat<Scalar> layer_norm_rows(const Mat<Scalar>& x, const Vec<Scalar>& gain, const Vec<Scalar>& bias) {
    if (gain.size() != x.cols() || bias.size() != x.cols()) {
        throw DimError("layer_norm: gain/bias length " + std::to_string(gain.size()) + "," +
                       std::to_string(bias.size()) + " vs width " + std::to_string(x.cols()));
    }
    Mat<Scalar> out(x.rows(), x.cols());
    const Scalar inv_n = Scalar(1) / Scalar(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Scalar mu = x.row(i).sum() * inv_n;
        const auto centered = (x.row(i).array() - mu);
        const Scalar var = (centered * centered).sum() * inv_n;
        const Scalar inv_sigma = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
        out.row(i) = (centered * inv_sigma).transpose() * gain.array() + bias.array();
    }
    check_finite(out, "layer_norm");
    return out;
}

// tanh-approximation GELU; the derivative is used by the trainer.
template <typename Scalar>
Scalar gelu_scalar(Scalar x) {
    const Scalar c = Scalar(0.7978845608028654);  // sqrt(2/pi)
    const Scalar a = Scalar(0.044715);
    return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + a * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad_scalar(Scalar x) {
    const Scalar c = Scalar(0.7978845608028654);
    const Scalar a = Scalar(0.044715);
    const Scalar u = c * (x + a * x * x * x);
    const Scalar t = std::tanh(u);
    const Scalar du = c * (Scalar(1) + Scalar(3) * a * x * x);
    return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * du;
}

template <typename Scalar>
Mat<Scalar> gelu(const Mat<Scalar>& x) {
    Mat<Scalar> out = x.unaryExpr([](Scalar v) { return gelu_scalar(v); });
    check_finite(out, "gelu");
    return out;
}

// Deterministic RNG. mt19937_64 is pinned by the standard and all variate
// transforms are explicit here, so streams replay identically everywhere.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] by rejection
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = uint64_t(hi - lo) + 1;
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % span;
        uint64_t r = gen_();
        while (r >= limit) r = gen_();
        return lo + int64_t(r % span);
    }

    // Box-Muller, one variate per call
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double exponential() {
        double u = uniform();
        while (u <= 0.0) u = uniform();
        return -std::log(u);
    }

    // index draw from an unnormalized nonnegative weight row
    template <typename Derived>
    int categorical(const Eigen::DenseBase<Derived>& weights) {
        double total = 0.0;
        for (Eigen::Index i = 0; i < weights.size(); ++i) total += double(weights(i));
        if (!(total > 0.0)) throw NumericError("categorical: non-positive weight total");
        double u = uniform() * total;
        for (Eigen::Index i = 0; i < weights.size(); ++i) {
            u -= double(weights(i));
            if (u < 0.0) return int(i);
        }
        return int(weights.size() - 1);
    }

    void shuffle(std::vector<int>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[size_t(uniform_int(0, int64_t(i) - 1))]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace mdmlab
