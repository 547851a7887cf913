#pragma once

#include <span>

#include "procplan/matrix.hpp"

// Dense-layer kernels. `parallel` splits the outer loop across OpenMP threads;
// `serial` is the reference. Both accumulate every output element in the same
// order, so their results are bitwise identical for any thread count.
namespace procplan::kernels {

enum class Backend { serial, parallel };

namespace serial {
/// out = in · weightsᵀ + bias.  in: B x I, weights: O x I, out: B x O.
void dense_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out);
/// grad_weights = grad_outᵀ · in, grad_bias = column sums of grad_out.
void dense_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weights,
                           std::span<double> grad_bias);
/// grad_in = grad_out · weights.
void dense_backward_input(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in);
}  // namespace serial

namespace parallel {
void dense_forward(const Matrix& in, const Matrix& weights, std::span<const double> bias, Matrix& out);
void dense_backward_params(const Matrix& grad_out, const Matrix& in, Matrix& grad_weights,
                           std::span<double> grad_bias);
void dense_backward_input(const Matrix& grad_out, const Matrix& weights, Matrix& grad_in);
}  // namespace parallel

void dense_forward(Backend backend, const Matrix& in, const Matrix& weights,
                   std::span<const double> bias, Matrix& out);
void dense_backward_params(Backend backend, const Matrix& grad_out, const Matrix& in,
                           Matrix& grad_weights, std::span<double> grad_bias);
void dense_backward_input(Backend backend, const Matrix& grad_out, const Matrix& weights,
                          Matrix& grad_in);

/// Number of threads the parallel backend will use.
int max_threads();

}  // namespace procplan::kernels
