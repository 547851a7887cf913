#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "procplan/kernels.hpp"
#include "procplan/matrix.hpp"

namespace procplan {

/// Fully connected network: tanh on hidden layers, identity on the output.
class Mlp {
public:
    struct Layer {
        Matrix weights;  // out x in
        std::vector<double> bias;
    };

    /// Activations kept by forward() for backward().
    struct Cache {
        std::vector<Matrix> inputs;  // input to each layer (post-activation of the previous)
    };

    Mlp() = default;
    /// `sizes` = {input, hidden..., output}. Weights ~ N(0, 1/fan_in), biases 0.
    Mlp(std::vector<std::size_t> sizes, std::uint64_t seed);

    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::size_t input_size() const { return sizes_.front(); }
    std::size_t output_size() const { return sizes_.back(); }
    const std::vector<Layer>& layers() const { return layers_; }

    /// in: B x input_size. Returns B x output_size.
    Matrix forward(const Matrix& in, Cache* cache = nullptr) const;

    /// Given d(loss)/d(output) for the batch of the cached forward, returns the
    /// flat parameter gradient (layout as parameters()).
    std::vector<double> backward(const Cache& cache, const Matrix& grad_out) const;

    std::size_t parameter_count() const;
    /// Flat layout: for each layer, weights row-major then bias.
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> flat);

    void set_backend(kernels::Backend backend) { backend_ = backend; }
    kernels::Backend backend() const { return backend_; }

private:
    std::vector<std::size_t> sizes_;
    std::vector<Layer> layers_;
    kernels::Backend backend_ = kernels::Backend::parallel;
};

}  // namespace procplan
