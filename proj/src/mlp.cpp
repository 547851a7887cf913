#include "procplan/mlp.hpp"

#include <cmath>
#include <random>

#include "procplan/error.hpp"

namespace procplan {

Mlp::Mlp(std::vector<std::size_t> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw Error("invalid_network", "an MLP needs at least input and output sizes");
    for (std::size_t s : sizes_)
        if (s == 0) throw Error("invalid_network", "layer sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        Layer layer{Matrix(sizes_[l + 1], sizes_[l]), std::vector<double>(sizes_[l + 1], 0.0)};
        const double scale = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
        for (double& w : layer.weights.data()) w = scale * normal(rng);
        layers_.push_back(std::move(layer));
    }
}

Matrix Mlp::forward(const Matrix& in, Cache* cache) const {
    if (in.cols() != input_size()) throw Error("shape_mismatch", "network input has the wrong width");
    if (cache) cache->inputs.clear();
    Matrix x = in;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Matrix y;
        kernels::dense_forward(backend_, x, layers_[l].weights, layers_[l].bias, y);
        if (l + 1 < layers_.size())
            for (double& v : y.data()) v = std::tanh(v);
        if (cache) cache->inputs.push_back(std::move(x));
        x = std::move(y);
    }
    return x;
}

std::vector<double> Mlp::backward(const Cache& cache, const Matrix& grad_out) const {
    if (cache.inputs.size() != layers_.size()) throw Error("invalid_cache", "backward without a matching forward");
    std::vector<double> grad(parameter_count());

    std::vector<std::size_t> offsets(layers_.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        offsets[l] = offset;
        offset += layers_[l].weights.size() + layers_[l].bias.size();
    }

    Matrix delta = grad_out;
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const Layer& layer = layers_[l];
        Matrix grad_w;
        std::span<double> grad_b(grad.data() + offsets[l] + layer.weights.size(), layer.bias.size());
        kernels::dense_backward_params(backend_, delta, cache.inputs[l], grad_w, grad_b);
        std::copy(grad_w.data().begin(), grad_w.data().end(), grad.begin() + static_cast<std::ptrdiff_t>(offsets[l]));
        if (l == 0) break;
        Matrix grad_in;
        kernels::dense_backward_input(backend_, delta, layer.weights, grad_in);
        // Input of layer l is tanh output of layer l-1: d tanh = 1 - y².
        const auto& y = cache.inputs[l].data();
        for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in.data()[i] *= 1.0 - y[i] * y[i];
        delta = std::move(grad_in);
    }
    return grad;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
    return n;
}

std::vector<double> Mlp::parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& layer : layers_) {
        flat.insert(flat.end(), layer.weights.data().begin(), layer.weights.data().end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    return flat;
}

void Mlp::set_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw Error("shape_mismatch", "parameter count mismatch");
    auto it = flat.begin();
    for (auto& layer : layers_) {
        std::copy(it, it + static_cast<std::ptrdiff_t>(layer.weights.size()), layer.weights.data().begin());
        it += static_cast<std::ptrdiff_t>(layer.weights.size());
        std::copy(it, it + static_cast<std::ptrdiff_t>(layer.bias.size()), layer.bias.begin());
        it += static_cast<std::ptrdiff_t>(layer.bias.size());
    }
}

}  // namespace procplan
