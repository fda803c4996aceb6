// Linear SVM, squared hinge loss, L2 penalty, on standardized features.
// Solved by dual coordinate descent with a seeded visiting order; the bias is
// an extra constant feature and is regularized like the weights.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "malbench/learn.hpp"

namespace malbench {

namespace {

double primal_objective(const Matrix& z, std::span<const double> sign, std::span<const double> w, double b,
                        double c) {
    double reg = b * b;
    for (double v : w) reg += v * v;
    double loss = 0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto row = z.row(i);
        const double m = sign[i] * (std::inner_product(row.begin(), row.end(), w.begin(), 0.0) + b);
        if (m < 1.0) loss += (1.0 - m) * (1.0 - m);
    }
    return 0.5 * reg + c * loss;
}

}  // namespace

void fit_linear_svm(const Matrix& x, std::span<const int> y, std::uint64_t seed, const SvmParams& params,
                    TrainedModel& model) {
    if (params.c <= 0) throw Error(ErrorKind::InvalidArgument, "svm.c must be positive");
    const std::size_t n = x.rows, d = x.cols;

    model.mean.assign(d, 0.0);
    model.scale.assign(d, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) model.mean[j] += x(i, j);
    for (double& m : model.mean) m /= static_cast<double>(n);
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x(i, j) - model.mean[j];
            var[j] += diff * diff;
        }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        model.scale[j] = sd > 0 ? sd : 1.0;
    }

    Matrix z(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) z(i, j) = (x(i, j) - model.mean[j]) / model.scale[j];

    std::vector<double> sign(n);
    for (std::size_t i = 0; i < n; ++i) sign[i] = y[i] == 1 ? 1.0 : -1.0;

    const double diag = 0.5 / params.c;
    std::vector<double> qii(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = z.row(i);
        qii[i] = std::inner_product(row.begin(), row.end(), row.begin(), 0.0) + 1.0 + diag;
    }

    std::vector<double> alpha(n, 0.0);
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 rng(derive_seed(seed, "svm"));

    double previous = primal_objective(z, sign, w, b, params.c);
    model.converged = false;
    model.iterations = 0;
    for (std::size_t epoch = 0; epoch < params.max_iter; ++epoch) {
        for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.bounded(k)]);
        for (std::size_t i : order) {
            const auto row = z.row(i);
            const double g =
                sign[i] * (std::inner_product(row.begin(), row.end(), w.begin(), 0.0) + b) - 1.0 + diag * alpha[i];
            const double pg = alpha[i] == 0.0 ? std::min(g, 0.0) : g;
            if (std::fabs(pg) < 1e-12) continue;
            const double updated = std::max(alpha[i] - g / qii[i], 0.0);
            const double delta = (updated - alpha[i]) * sign[i];
            alpha[i] = updated;
            for (std::size_t j = 0; j < d; ++j) w[j] += delta * row[j];
            b += delta;
        }
        model.iterations = epoch + 1;
        const double current = primal_objective(z, sign, w, b, params.c);
        const double change = std::fabs(previous - current) / std::max(std::fabs(current), 1e-12);
        previous = current;
        if (change < params.tol) {
            model.converged = true;
            break;
        }
    }
    model.weights = std::move(w);
    model.bias = b;
}

}  // namespace malbench
