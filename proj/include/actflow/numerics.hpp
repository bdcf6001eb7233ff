#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "actflow/tensor.hpp"

namespace actflow {

/// Thrown when a numeric routine produces or observes a non-finite value.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Glorot-uniform initialization: entries drawn from [-b, b] with
/// b = sqrt(6 / (rows + cols)).
inline Tensor glorot_init(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0)
        throw std::invalid_argument("glorot_init: zero dimension");
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

/// Argmax with the project-wide tie convention: equal values resolve to the
/// lowest index.
inline std::size_t argmax(const double* v, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// A parameter collection is any copyable type exposing
//   for_each_tensor(fn(const std::string& name, Tensor&))
// with a deterministic visit order. The optimizer, the gradient oracle and
// the checkpoint writer all operate through this surface.

template <typename Params>
std::vector<Tensor*> collect_tensors(Params& p) {
    std::vector<Tensor*> out;
    p.for_each_tensor([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

template <typename Params>
std::vector<const Tensor*> collect_tensors(const Params& p) {
    std::vector<const Tensor*> out;
    const_cast<Params&>(p).for_each_tensor(
        [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

template <typename Params>
double global_l2_norm(const Params& grads) {
    double sq = 0.0;
    for (const Tensor* t : collect_tensors(grads))
        for (std::size_t i = 0; i < t->size(); ++i) sq += (*t)[i] * (*t)[i];
    return std::sqrt(sq);
}

/// One SGD update: grads are rescaled by clip_norm/||g|| when the global L2
/// norm exceeds clip_norm, then each parameter moves by -lr * grad.
template <typename Params>
void sgd_step(Params& params, const Params& grads, double lr, double clip_norm) {
    if (lr < 0.0) throw std::invalid_argument("sgd_step: lr must be >= 0");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("sgd_step: clip_norm must be > 0");

    std::vector<Tensor*> ps = collect_tensors(params);
    std::vector<const Tensor*> gs = collect_tensors(grads);
    if (ps.size() != gs.size())
        throw std::invalid_argument("sgd_step: params/grads tensor count mismatch");

    const double norm = global_l2_norm(grads);
    const double scale = norm > clip_norm ? clip_norm / norm : 1.0;

    for (std::size_t k = 0; k < ps.size(); ++k) {
        if (!ps[k]->same_shape(*gs[k]))
            throw std::invalid_argument("sgd_step: shape mismatch " + ps[k]->shape_str() +
                                        " vs " + gs[k]->shape_str());
        Tensor& p = *ps[k];
        const Tensor& g = *gs[k];
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * scale * g[i];
    }
}

/// Central finite differences: for each scalar parameter theta,
/// grad ~ (loss(theta+eps) - loss(theta-eps)) / (2 eps), everything else
/// held fixed. This is the independent oracle every backward pass is
/// checked against; it deliberately knows nothing about the analytic path.
template <typename Params, typename LossFn>
Params finite_diff_grad(const LossFn& loss_fn, const Params& params, double eps = 1e-5) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be > 0");

    Params work = params;
    Params grads = params;
    std::vector<Tensor*> wts = collect_tensors(work);
    std::vector<Tensor*> gts = collect_tensors(grads);

    for (std::size_t k = 0; k < wts.size(); ++k) {
        Tensor& w = *wts[k];
        Tensor& g = *gts[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + eps;
            const double up = loss_fn(static_cast<const Params&>(work));
            w[i] = saved - eps;
            const double down = loss_fn(static_cast<const Params&>(work));
            w[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericalError("finite_diff_grad: loss returned non-finite value");
            g[i] = (up - down) / (2.0 * eps);
        }
    }
    return grads;
}

/// Normalized gradient discrepancy used by all gradient checks:
/// |a-b| / max(floor, |a|, |b|). The floor keeps finite-difference noise on
/// near-zero gradients from registering as disagreement.
inline double grad_rel_error(double analytic, double numeric, double floor = 1e-3) {
    const double denom = std::max(floor, std::max(std::fabs(analytic), std::fabs(numeric)));
    return std::fabs(analytic - numeric) / denom;
}

/// Max normalized discrepancy between an analytic gradient set and the
/// finite-difference oracle.
template <typename Params>
double max_grad_rel_error(const Params& analytic, const Params& numeric) {
    std::vector<const Tensor*> as = collect_tensors(analytic);
    std::vector<const Tensor*> ns = collect_tensors(numeric);
    if (as.size() != ns.size())
        throw std::invalid_argument("max_grad_rel_error: tensor count mismatch");
    double worst = 0.0;
    for (std::size_t k = 0; k < as.size(); ++k) {
        if (!as[k]->same_shape(*ns[k]))
            throw std::invalid_argument("max_grad_rel_error: shape mismatch");
        for (std::size_t i = 0; i < as[k]->size(); ++i)
            worst = std::max(worst, grad_rel_error((*as[k])[i], (*ns[k])[i]));
    }
    return worst;
}

}  // namespace actflow
